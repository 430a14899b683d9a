use super::{Deformer, DeformerError, Result};
use crate::dataset::DatasetFile;
use crate::mesh::Vec3;
use crate::report::{error_field, ErrorStats, MetricsRow};

/// Per-frame metrics plus the aggregate over every vertex of every frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub rows: Vec<MetricsRow>,
    pub aggregate: ErrorStats,
}

fn frame_errors(model: &dyn Deformer, data: &DatasetFile, i: usize) -> Result<Vec<f64>> {
    let f = data.frames.get(i).ok_or_else(|| DeformerError::Config(format!("frame {i} out of range")))?;
    let pred = model.infer(&f.inputs, &f.linear_positions)?;
    Ok(error_field(&pred, &f.final_positions)?)
}

/// Compares `model` against the dataset's final positions on the given frames.
pub fn evaluate(model: &dyn Deformer, data: &DatasetFile, indices: &[usize]) -> Result<Evaluation> {
    if model.vertex_count() != data.vertices {
        return Err(DeformerError::WidthMismatch { expected: model.vertex_count(), got: data.vertices });
    }
    let mut rows = Vec::with_capacity(indices.len());
    let mut all = Vec::with_capacity(indices.len() * data.vertices);
    for &i in indices {
        let e = frame_errors(model, data, i)?;
        rows.push(MetricsRow::from_errors(i, &e));
        all.extend(e);
    }
    Ok(Evaluation { rows, aggregate: ErrorStats::from_errors(&all) })
}

/// Error statistics restricted to `vertices`, pooled over the frames.
pub fn evaluate_subset(model: &dyn Deformer, data: &DatasetFile, indices: &[usize], vertices: &[usize]) -> Result<ErrorStats> {
    let mut all = Vec::with_capacity(indices.len() * vertices.len());
    for &i in indices {
        let e = frame_errors(model, data, i)?;
        for &v in vertices {
            all.push(*e.get(v).ok_or(DeformerError::WidthMismatch { expected: e.len(), got: v + 1 })?);
        }
    }
    Ok(ErrorStats::from_errors(&all))
}

/// Vertices with some skin weight in `[lo, hi]`.
pub fn blend_zone_vertices(skin_weights: &[Vec<f64>], lo: f64, hi: f64) -> Vec<usize> {
    skin_weights
        .iter()
        .enumerate()
        .filter(|(_, w)| w.iter().any(|&x| x >= lo && x <= hi))
        .map(|(v, _)| v)
        .collect()
}

/// Returns the linear mesh unchanged.
#[derive(Clone, Copy, Debug)]
pub struct LinearBaseline {
    pub inputs: usize,
    pub vertices: usize,
}

impl Deformer for LinearBaseline {
    fn input_width(&self) -> usize {
        self.inputs
    }

    fn vertex_count(&self) -> usize {
        self.vertices
    }

    fn infer(&self, inputs: &[f64], linear: &[Vec3<f64>]) -> Result<Vec<Vec3<f64>>> {
        if inputs.len() != self.inputs {
            return Err(DeformerError::WidthMismatch { expected: self.inputs, got: inputs.len() });
        }
        if linear.len() != self.vertices {
            return Err(DeformerError::WidthMismatch { expected: self.vertices, got: linear.len() });
        }
        Ok(linear.to_vec())
    }
}
