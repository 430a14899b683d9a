//! Training data extraction: a diffable text format holding, per frame, the
//! rig inputs and the linear and final vertex positions.
//!
//! ```text
//! #deformapprox-dataset v1
//! elbow_flex:scalar,wrist_twist:scalar
//! vertices=240
//! <inputs>,<linear x y z ...>,<final x y z ...>
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::Vec3;
use crate::rotation::encode_transform;
use crate::synthrig::{ControlSequence, ControllerKind, Rig, RigError};

pub const DATASET_MAGIC: &str = "#deformapprox-dataset v1";

/// Smallest standard deviation kept by [`NormalizationStats`].
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("input `{0}` does not name a rig controller or bone of that kind")]
    UnresolvedInput(String),
    #[error("duplicate input name `{0}`")]
    DuplicateInput(String),
    #[error("dataset header mismatch: file has `{file}`, expected `{expected}`")]
    HeaderMismatch { file: String, expected: String },
    #[error("dataset parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("non-finite value in frame {0}")]
    NonFinite(usize),
    #[error("invalid split: {0}")]
    BadSplit(String),
    #[error("need at least {needed} training frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error(transparent)]
    Rig(#[from] RigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

/// Ordered network inputs. Scalar names refer to scalar controllers; matrix
/// names refer to matrix controllers or, failing that, to bones (posed world
/// transform).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RigInputSpec {
    pub entries: Vec<(String, ControllerKind)>,
}

impl RigInputSpec {
    pub fn new(entries: Vec<(String, ControllerKind)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for (name, _) in &entries {
            if name.is_empty() || name.contains([',', ':', '\n']) {
                return Err(DatasetError::UnresolvedInput(name.clone()));
            }
            if !seen.insert(name.as_str()) {
                return Err(DatasetError::DuplicateInput(name.clone()));
            }
        }
        Ok(Self { entries })
    }

    /// Every controller of the rig, in rig order.
    pub fn from_controllers(rig: &Rig) -> Self {
        Self { entries: rig.controllers.iter().map(|c| (c.name.clone(), c.kind)).collect() }
    }

    /// Every bone of the rig as a matrix input.
    pub fn from_bones(rig: &Rig) -> Self {
        Self { entries: rig.bones.iter().map(|b| (b.name.clone(), ControllerKind::Matrix)).collect() }
    }

    pub fn width(&self) -> usize {
        self.entries.iter().map(|(_, k)| k.width()).sum()
    }

    /// Column offset of each entry within an input row.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.entries
            .iter()
            .map(|(_, k)| {
                let o = off;
                off += k.width();
                o
            })
            .collect()
    }

    pub fn header_line(&self) -> String {
        self.entries
            .iter()
            .map(|(n, k)| format!("{n}:{}", if *k == ControllerKind::Scalar { "scalar" } else { "matrix" }))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_header_line(line: &str) -> Result<Self> {
        let bad = |msg: String| DatasetError::Parse { line: 2, msg };
        if line.is_empty() {
            return Self::new(Vec::new());
        }
        let entries = line
            .split(',')
            .map(|item| {
                let (name, kind) = item.rsplit_once(':').ok_or_else(|| bad(format!("`{item}` is not name:kind")))?;
                let kind = match kind {
                    "scalar" => ControllerKind::Scalar,
                    "matrix" => ControllerKind::Matrix,
                    other => return Err(bad(format!("unknown kind `{other}`"))),
                };
                Ok((name.to_string(), kind))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    /// Packs one pose into an input row.
    pub fn pack(&self, rig: &Rig, pose: &[f64]) -> Result<Vec<f64>> {
        let mut bones = None;
        let mut row = Vec::with_capacity(self.width());
        for (name, kind) in &self.entries {
            match rig.controller_index(name) {
                Some(i) if rig.controllers[i].kind == *kind => {
                    let off = rig.controller_offset(i);
                    row.extend_from_slice(&pose[off..off + kind.width()]);
                }
                _ if *kind == ControllerKind::Matrix => {
                    let b = rig.bone_index(name).ok_or_else(|| DatasetError::UnresolvedInput(name.clone()))?;
                    if bones.is_none() {
                        bones = Some(rig.bone_transforms(pose)?);
                    }
                    let t = &bones.as_ref().unwrap()[b];
                    let packed = encode_transform(t).map_err(|e| DatasetError::UnresolvedInput(format!("{name}: {e}")))?;
                    row.extend_from_slice(&packed);
                }
                _ => return Err(DatasetError::UnresolvedInput(name.clone())),
            }
        }
        Ok(row)
    }

    /// Fails unless every entry resolves against `rig`.
    pub fn check_against(&self, rig: &Rig) -> Result<()> {
        for (name, kind) in &self.entries {
            let ok = match rig.controller_index(name) {
                Some(i) => rig.controllers[i].kind == *kind || (*kind == ControllerKind::Matrix && rig.bone_index(name).is_some()),
                None => *kind == ControllerKind::Matrix && rig.bone_index(name).is_some(),
            };
            if !ok {
                return Err(DatasetError::UnresolvedInput(name.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub inputs: Vec<f64>,
    pub linear_positions: Vec<Vec3<f64>>,
    pub final_positions: Vec<Vec3<f64>>,
}

impl FrameRecord {
    /// `final − linear` per vertex.
    pub fn residual(&self) -> Vec<Vec3<f64>> {
        self.final_positions
            .iter()
            .zip(&self.linear_positions)
            .map(|(f, l)| [f[0] - l[0], f[1] - l[1], f[2] - l[2]])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub spec: RigInputSpec,
    pub vertices: usize,
    pub frames: Vec<FrameRecord>,
}

impl DatasetFile {
    pub fn new(spec: RigInputSpec, vertices: usize) -> Self {
        Self { spec, vertices, frames: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn header(&self) -> String {
        header_text(&self.spec, self.vertices)
    }

    /// Adds a frame after checking its widths.
    pub fn push(&mut self, frame: FrameRecord) -> Result<()> {
        let idx = self.frames.len();
        if frame.inputs.len() != self.spec.width()
            || frame.linear_positions.len() != self.vertices
            || frame.final_positions.len() != self.vertices
        {
            return Err(DatasetError::Parse { line: 4 + idx, msg: "frame width does not match header".into() });
        }
        let finite = frame.inputs.iter().all(|x| x.is_finite())
            && frame.linear_positions.iter().chain(&frame.final_positions).flatten().all(|x| x.is_finite());
        if !finite {
            return Err(DatasetError::NonFinite(idx));
        }
        self.frames.push(frame);
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = self.header();
        for f in &self.frames {
            write_row(&mut s, f);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let magic = lines.next().unwrap_or("");
        if magic != DATASET_MAGIC {
            return Err(DatasetError::Parse { line: 1, msg: format!("expected `{DATASET_MAGIC}`, found `{magic}`") });
        }
        let spec = RigInputSpec::parse_header_line(lines.next().unwrap_or(""))?;
        let vline = lines.next().unwrap_or("");
        let vertices = vline
            .strip_prefix("vertices=")
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| DatasetError::Parse { line: 3, msg: format!("expected `vertices=N`, found `{vline}`") })?;
        let mut file = Self::new(spec, vertices);
        let width = file.spec.width();
        let expected = width + 6 * vertices;
        for (i, line) in lines.enumerate() {
            let lineno = i + 4;
            if line.is_empty() {
                continue;
            }
            let values = line
                .split(',')
                .map(|t| t.parse::<f64>().map_err(|e| DatasetError::Parse { line: lineno, msg: format!("`{t}`: {e}") }))
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != expected {
                return Err(DatasetError::Parse { line: lineno, msg: format!("{} columns, expected {expected}", values.len()) });
            }
            let pts = |s: &[f64]| s.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect::<Vec<_>>();
            file.push(FrameRecord {
                inputs: values[..width].to_vec(),
                linear_positions: pts(&values[width..width + 3 * vertices]),
                final_positions: pts(&values[width + 3 * vertices..]),
            })?;
        }
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Input rows of the given frames.
    pub fn inputs(&self, indices: &[usize]) -> Vec<Vec<f64>> {
        indices.iter().map(|&i| self.frames[i].inputs.clone()).collect()
    }
}

fn header_text(spec: &RigInputSpec, vertices: usize) -> String {
    format!("{DATASET_MAGIC}\n{}\nvertices={vertices}\n", spec.header_line())
}

fn write_row(s: &mut String, f: &FrameRecord) {
    let mut first = true;
    let values = f.inputs.iter().chain(f.linear_positions.iter().flatten()).chain(f.final_positions.iter().flatten());
    for v in values {
        if !first {
            s.push(',');
        }
        first = false;
        // `{:?}` prints the shortest string that parses back to the same bits.
        write!(s, "{v:?}").unwrap();
    }
    s.push('\n');
}

/// Evaluates `rig` on every frame of `seq`.
pub fn extract_frames(rig: &Rig, seq: &ControlSequence, spec: &RigInputSpec) -> Result<DatasetFile> {
    spec.check_against(rig)?;
    let mut file = DatasetFile::new(spec.clone(), rig.mesh.vertex_count());
    for pose in &seq.frames {
        file.push(FrameRecord {
            inputs: spec.pack(rig, pose)?,
            linear_positions: rig.evaluate_linear(pose)?,
            final_positions: rig.evaluate_ground_truth(pose)?,
        })?;
    }
    Ok(file)
}

/// Extracts `seq` into `path`. With `append`, rows are added to an existing
/// file whose header must match exactly; the whole file is returned.
pub fn extract(rig: &Rig, seq: &ControlSequence, spec: &RigInputSpec, path: &Path, append: bool) -> Result<DatasetFile> {
    let new = extract_frames(rig, seq, spec)?;
    if append && path.exists() {
        let mut existing = DatasetFile::read(path)?;
        if existing.header() != new.header() {
            return Err(DatasetError::HeaderMismatch { file: existing.header(), expected: new.header() });
        }
        let mut text = String::new();
        for f in &new.frames {
            write_row(&mut text, f);
        }
        fs::OpenOptions::new().append(true).open(path)?.write_all(text.as_bytes())?;
        existing.frames.extend(new.frames);
        Ok(existing)
    } else {
        new.write(path)?;
        Ok(new)
    }
}

/// Every `stride`-th frame (starting at `offset`) is held out for validation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub stride: usize,
    #[serde(default)]
    pub offset: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { stride: 10, offset: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

pub fn split(frames: usize, spec: SplitSpec) -> Result<Split> {
    if spec.stride < 2 {
        return Err(DatasetError::BadSplit(format!("stride must be >= 2, got {}", spec.stride)));
    }
    if frames == 0 {
        return Err(DatasetError::BadSplit("dataset is empty".into()));
    }
    if spec.stride > frames {
        log::warn!("split stride {} exceeds {frames} frames; validation holds at most one frame", spec.stride);
    }
    let is_val = |i: usize| i >= spec.offset && (i - spec.offset) % spec.stride == 0;
    split_by(frames, is_val)
}

/// Split with an explicit list of validation frames.
pub fn split_from_list(frames: usize, validation: &[usize]) -> Result<Split> {
    if let Some(&bad) = validation.iter().find(|&&i| i >= frames) {
        return Err(DatasetError::BadSplit(format!("validation frame {bad} out of range for {frames} frames")));
    }
    let mut mark = vec![false; frames];
    for &i in validation {
        mark[i] = true;
    }
    split_by(frames, |i| mark[i])
}

fn split_by(frames: usize, is_val: impl Fn(usize) -> bool) -> Result<Split> {
    let (validation, train): (Vec<usize>, Vec<usize>) = (0..frames).partition(|&i| is_val(i));
    if train.is_empty() {
        return Err(DatasetError::BadSplit("training split is empty".into()));
    }
    Ok(Split { train, validation })
}

/// Per-feature mean and population standard deviation of the training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Features whose std was raised to [`STD_FLOOR`].
    pub clamped: Vec<bool>,
}

impl NormalizationStats {
    pub fn identity(width: usize) -> Self {
        Self { mean: vec![0.0; width], std: vec![1.0; width], clamped: vec![false; width] }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

/// Order-independent sum: values are sorted before accumulation, so the
/// result does not depend on the order rows are presented in.
fn stable_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

pub fn fit_normalization(file: &DatasetFile, train: &[usize]) -> Result<NormalizationStats> {
    if train.len() < 2 {
        return Err(DatasetError::TooFewFrames { needed: 2, got: train.len() });
    }
    let rows: Vec<&[f64]> = train.iter().map(|&i| file.frames[i].inputs.as_slice()).collect();
    Ok(fit_rows(&rows, file.spec.width()))
}

pub(crate) fn fit_rows(rows: &[&[f64]], width: usize) -> NormalizationStats {
    let n = rows.len() as f64;
    let mut stats = NormalizationStats::identity(width);
    for d in 0..width {
        let mean = stable_sum(rows.iter().map(|r| r[d]).collect()) / n;
        let var = stable_sum(rows.iter().map(|r| (r[d] - mean) * (r[d] - mean)).collect()) / n;
        let std = var.sqrt();
        stats.mean[d] = mean;
        if std < STD_FLOOR {
            stats.std[d] = STD_FLOOR;
            stats.clamped[d] = true;
        } else {
            stats.std[d] = std;
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthrig::{generate_arm_rig, sample_animation, SampleMode};

    fn arm_file(frames: usize) -> (Rig, DatasetFile) {
        let rig = generate_arm_rig(20, 12).unwrap();
        let seq = sample_animation(&rig, frames, SampleMode::Clip, 0).unwrap();
        let spec = RigInputSpec::from_controllers(&rig);
        let file = extract_frames(&rig, &seq, &spec).unwrap();
        (rig, file)
    }

    #[test]
    fn extract_shapes_and_append() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("arm.csv");
        let rig = generate_arm_rig(20, 12).unwrap();
        let seq = sample_animation(&rig, 10, SampleMode::Clip, 0).unwrap();
        let spec = RigInputSpec::from_controllers(&rig);
        let f = extract(&rig, &seq, &spec, &path, false).unwrap();
        assert_eq!((f.len(), f.spec.width(), f.vertices), (10, 2, 240));
        let text = fs::read_to_string(&path).unwrap();
        let row = text.lines().nth(3).unwrap();
        assert_eq!(row.split(',').count(), 2 + 2 * 240 * 3);

        let f2 = extract(&rig, &seq, &spec, &path, true).unwrap();
        assert_eq!(f2.len(), 20);
        let back = DatasetFile::read(&path).unwrap();
        assert_eq!(back, f2);
        assert_eq!(back.header(), f.header());

        let other = RigInputSpec::new(vec![("elbow_flex".into(), ControllerKind::Scalar)]).unwrap();
        assert!(matches!(extract(&rig, &seq, &other, &path, true), Err(DatasetError::HeaderMismatch { .. })));
    }

    #[test]
    fn matrix_inputs_are_nine_wide() {
        let rig = generate_arm_rig(20, 12).unwrap();
        let spec = RigInputSpec::new(vec![("forearm".into(), ControllerKind::Matrix)]).unwrap();
        assert_eq!(spec.width(), 9);
        let seq = sample_animation(&rig, 3, SampleMode::Random, 1).unwrap();
        let f = extract_frames(&rig, &seq, &spec).unwrap();
        assert_eq!(f.frames[0].inputs.len(), 9);
        let bad = RigInputSpec::new(vec![("nope".into(), ControllerKind::Scalar)]).unwrap();
        assert!(matches!(extract_frames(&rig, &seq, &bad), Err(DatasetError::UnresolvedInput(_))));
        assert!(RigInputSpec::new(vec![("a".into(), ControllerKind::Scalar), ("a".into(), ControllerKind::Scalar)]).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let (_, mut f) = arm_file(4);
        f.frames[0].inputs[0] = 0.1f32 as f64;
        f.frames[1].inputs[1] = -1e-300;
        let back = DatasetFile::parse(&f.to_text()).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_text(), f.to_text());
        assert!(DatasetFile::parse("#deformapprox-dataset v2\n\nvertices=0\n").is_err());
    }

    #[test]
    fn split_examples() {
        let s = split(10, SplitSpec { stride: 5, offset: 0 }).unwrap();
        assert_eq!(s.validation, vec![0, 5]);
        assert_eq!(s.train, vec![1, 2, 3, 4, 6, 7, 8, 9]);
        let s = split(10, SplitSpec { stride: 2, offset: 1 }).unwrap();
        assert_eq!(s.validation, vec![1, 3, 5, 7, 9]);
        let s = split(3, SplitSpec { stride: 7, offset: 0 }).unwrap();
        assert_eq!(s.validation, vec![0]);
        assert!(split(10, SplitSpec { stride: 1, offset: 0 }).is_err());
        assert!(split(0, SplitSpec::default()).is_err());
        assert!(split_from_list(2, &[0, 1]).is_err());
        assert_eq!(split_from_list(4, &[3]).unwrap().train, vec![0, 1, 2]);
    }

    #[test]
    fn normalization_examples() {
        let rows: Vec<&[f64]> = vec![&[0.0, 5.0], &[2.0, 5.0]];
        let s = fit_rows(&rows, 2);
        assert_eq!((s.mean[0], s.std[0]), (1.0, 1.0));
        assert_eq!((s.std[1], s.clamped[1]), (STD_FLOOR, true));

        let (_, f) = arm_file(30);
        let sp = split(30, SplitSpec::default()).unwrap();
        assert!(fit_normalization(&f, &sp.train[..1]).is_err());
        let stats = fit_normalization(&f, &sp.train).unwrap();
        let normed: Vec<Vec<f64>> = sp.train.iter().map(|&i| stats.normalize(&f.frames[i].inputs)).collect();
        let refs: Vec<&[f64]> = normed.iter().map(|r| r.as_slice()).collect();
        let again = fit_rows(&refs, 2);
        for d in 0..2 {
            assert!(again.mean[d].abs() < 1e-9);
            assert!((again.std[d] - 1.0).abs() < 1e-9);
        }
        let mut shuffled = sp.train.clone();
        shuffled.reverse();
        shuffled.swap(0, 3);
        assert_eq!(fit_normalization(&f, &shuffled).unwrap(), stats);
    }
}
