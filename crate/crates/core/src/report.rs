//! Per-vertex error fields, metric tables and heat-map PLY export.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::Vec3;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("length mismatch: {expected} vs {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid range [{lo}, {hi}]")]
    BadRange { lo: f64, hi: f64 },
    #[error("metrics parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ReportError> = std::result::Result<T, E>;

/// Euclidean distance per vertex.
pub fn error_field(pred: &[Vec3<f64>], truth: &[Vec3<f64>]) -> Result<Vec<f64>> {
    if pred.len() != truth.len() {
        return Err(ReportError::LengthMismatch { expected: truth.len(), got: pred.len() });
    }
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let d = [p[0] - t[0], p[1] - t[1], p[2] - t[2]];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        })
        .collect())
}

/// Linear-interpolated percentile of sorted data, `p ∈ [0, 1]`.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let f = pos - lo as f64;
    sorted[lo] + f * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub rmse: f64,
    pub mean: f64,
    pub max: f64,
    pub p95: f64,
}

impl ErrorStats {
    pub fn from_errors(errors: &[f64]) -> Self {
        if errors.is_empty() {
            return Self::default();
        }
        let n = errors.len() as f64;
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            rmse: (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
            mean: errors.iter().sum::<f64>() / n,
            max: *sorted.last().unwrap(),
            p95: percentile_sorted(&sorted, 0.95),
        }
    }
}

/// One line of the metrics CSV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub frame: usize,
    pub rmse: f64,
    pub mean: f64,
    pub max: f64,
    pub p95: f64,
}

impl MetricsRow {
    pub fn from_errors(frame: usize, errors: &[f64]) -> Self {
        let s = ErrorStats::from_errors(errors);
        Self { frame, rmse: s.rmse, mean: s.mean, max: s.max, p95: s.p95 }
    }
}

pub const METRICS_HEADER: &str = "frame,rmse,mean,max,p95";

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        writeln!(s, "{},{:?},{:?},{:?},{:?}", r.frame, r.rmse, r.mean, r.max, r.p95).unwrap();
    }
    s
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(ReportError::Parse { line: 1, msg: format!("expected header `{METRICS_HEADER}`") });
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let err = |msg: String| ReportError::Parse { line: i + 2, msg };
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(err(format!("{} columns", cols.len())));
            }
            let f = |s: &str| s.parse::<f64>().map_err(|e| err(e.to_string()));
            Ok(MetricsRow {
                frame: cols[0].parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
                rmse: f(cols[1])?,
                mean: f(cols[2])?,
                max: f(cols[3])?,
                p95: f(cols[4])?,
            })
        })
        .collect()
}

pub fn export_metrics(rows: &[MetricsRow], path: &Path) -> Result<()> {
    std::fs::write(path, metrics_csv(rows))?;
    Ok(())
}

/// Heat-map ramp: blue, cyan, green, yellow, red at equal spacing.
pub const RAMP: [[u8; 3]; 5] = [[0, 0, 255], [0, 255, 255], [0, 255, 0], [255, 255, 0], [255, 0, 0]];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangePolicy {
    Fixed { lo: f64, hi: f64 },
    /// `lo` = field minimum, `hi` = this percentile of the field.
    Percentile(f64),
}

impl Default for RangePolicy {
    fn default() -> Self {
        Self::Percentile(0.99)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSpec {
    pub range: RangePolicy,
}

/// Color range after resolving a policy against a field. A degenerate range
/// (`hi <= lo`, e.g. a constant field) paints everything with the low color.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResolvedRange {
    pub lo: f64,
    pub hi: f64,
}

impl ResolvedRange {
    pub fn is_degenerate(&self) -> bool {
        !(self.hi > self.lo)
    }
}

pub fn resolve_range(field: &[f64], policy: RangePolicy) -> Result<ResolvedRange> {
    match policy {
        RangePolicy::Fixed { lo, hi } => {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(ReportError::BadRange { lo, hi });
            }
            Ok(ResolvedRange { lo, hi })
        }
        RangePolicy::Percentile(p) => {
            let mut sorted: Vec<f64> = field.iter().copied().filter(|v| v.is_finite()).collect();
            sorted.sort_by(f64::total_cmp);
            if sorted.is_empty() {
                return Ok(ResolvedRange { lo: 0.0, hi: 0.0 });
            }
            Ok(ResolvedRange { lo: sorted[0], hi: percentile_sorted(&sorted, p) })
        }
    }
}

/// Color of `value` under `range`; values outside the range are clamped.
pub fn ramp_color(value: f64, range: ResolvedRange) -> [u8; 3] {
    if range.is_degenerate() || !value.is_finite() {
        return RAMP[0];
    }
    let t = ((value - range.lo) / (range.hi - range.lo)).clamp(0.0, 1.0);
    let seg = t * (RAMP.len() - 1) as f64;
    let i = (seg.floor() as usize).min(RAMP.len() - 2);
    let f = seg - i as f64;
    let mut c = [0u8; 3];
    for a in 0..3 {
        let (x, y) = (RAMP[i][a] as f64, RAMP[i + 1][a] as f64);
        c[a] = (x + f * (y - x)).round().clamp(0.0, 255.0) as u8;
    }
    c
}

pub fn heatmap_colors(field: &[f64], spec: &HeatmapSpec) -> Result<Vec<[u8; 3]>> {
    let range = resolve_range(field, spec.range)?;
    Ok(field.iter().map(|&v| ramp_color(v, range)).collect())
}

/// ASCII PLY with per-vertex colors. Coordinates use the shortest
/// round-trip decimal form so output bytes are stable.
pub fn ply_string(positions: &[Vec3<f64>], triangles: &[[usize; 3]], colors: &[[u8; 3]]) -> Result<String> {
    if colors.len() != positions.len() {
        return Err(ReportError::LengthMismatch { expected: positions.len(), got: colors.len() });
    }
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\ncomment deformapprox heat map\n");
    writeln!(s, "element vertex {}", positions.len()).unwrap();
    for p in ["x", "y", "z"] {
        writeln!(s, "property double {p}").unwrap();
    }
    for c in ["red", "green", "blue"] {
        writeln!(s, "property uchar {c}").unwrap();
    }
    writeln!(s, "element face {}", triangles.len()).unwrap();
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for (p, c) in positions.iter().zip(colors) {
        writeln!(s, "{:?} {:?} {:?} {} {} {}", p[0], p[1], p[2], c[0], c[1], c[2]).unwrap();
    }
    for t in triangles {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    Ok(s)
}

pub fn export_heatmap(positions: &[Vec3<f64>], triangles: &[[usize; 3]], field: &[f64], spec: &HeatmapSpec, path: &Path) -> Result<()> {
    if field.len() != positions.len() {
        return Err(ReportError::LengthMismatch { expected: positions.len(), got: field.len() });
    }
    let colors = heatmap_colors(field, spec)?;
    std::fs::write(path, ply_string(positions, triangles, &colors)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_field_examples() {
        let truth = vec![[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]];
        assert_eq!(error_field(&truth, &truth).unwrap(), vec![0.0; 3]);
        let up: Vec<Vec3<f64>> = truth.iter().map(|p| [p[0], p[1], p[2] + 1.0]).collect();
        assert_eq!(error_field(&up, &truth).unwrap(), vec![1.0; 3]);
        let mut one = truth.clone();
        one[1][0] += 3.0;
        one[1][1] += 4.0;
        assert_eq!(error_field(&one, &truth).unwrap(), vec![0.0, 5.0, 0.0]);
        assert!(error_field(&truth[..2], &truth).is_err());
    }

    #[test]
    fn stats_examples() {
        let s = ErrorStats::from_errors(&[1.0; 7]);
        assert_eq!((s.rmse, s.mean, s.max, s.p95), (1.0, 1.0, 1.0, 1.0));
        let s = ErrorStats::from_errors(&(0..=100).map(f64::from).collect::<Vec<_>>());
        assert_eq!((s.max, s.p95, s.mean), (100.0, 95.0, 50.0));
        assert_eq!(ErrorStats::from_errors(&[]), ErrorStats::default());
    }

    #[test]
    fn csv_examples() {
        assert_eq!(metrics_csv(&[]), "frame,rmse,mean,max,p95\n");
        let zero = MetricsRow::from_errors(3, &[0.0, 0.0]);
        assert_eq!(metrics_csv(&[zero]), "frame,rmse,mean,max,p95\n3,0.0,0.0,0.0,0.0\n");
        let rows = vec![MetricsRow::from_errors(0, &[0.1, 0.7, 1e-9]), MetricsRow::from_errors(1, &[2.5])];
        assert_eq!(parse_metrics_csv(&metrics_csv(&rows)).unwrap(), rows);
        assert!(parse_metrics_csv("frame,rmse\n").is_err());
    }

    #[test]
    fn ramp_examples() {
        let spec = HeatmapSpec::default();
        assert!(heatmap_colors(&[0.0; 4], &spec).unwrap().iter().all(|&c| c == RAMP[0]));
        let r = ResolvedRange { lo: 0.0, hi: 4.0 };
        for (i, stop) in RAMP.iter().enumerate() {
            assert_eq!(ramp_color(i as f64, r), *stop);
        }
        assert_eq!(ramp_color(0.5, r), [0, 128, 255]);
        assert_eq!(ramp_color(-1.0, r), RAMP[0]);
        assert_eq!(ramp_color(9.0, r), RAMP[4]);
        assert!(resolve_range(&[1.0], RangePolicy::Fixed { lo: 1.0, hi: 1.0 }).is_err());
        let p = resolve_range(&(0..=100).map(f64::from).collect::<Vec<_>>(), RangePolicy::Percentile(0.99)).unwrap();
        assert_eq!((p.lo, p.hi), (0.0, 99.0));
    }

    #[test]
    fn ply_layout() {
        let pos = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.5]];
        let s = ply_string(&pos, &[[0, 1, 2]], &[RAMP[0], RAMP[2], RAMP[4]]).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[3], "element vertex 3");
        assert_eq!(lines[12], "end_header");
        assert_eq!(lines[15], "0.0 1.0 0.5 255 0 0");
        assert_eq!(lines[16], "3 0 1 2");
    }
}
