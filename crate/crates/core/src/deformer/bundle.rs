//! The differential model: training, inference and the `DAXB` bundle format.
//!
//! ```text
//! "DAXB" u32 version=1
//! str config_json; str input_header; u64 vertices
//! f64[] norm_mean; f64[] norm_std; u64 n, u8 clamped[n]
//! u64 pca_dim; u64 pca_k; f64[] pca_mean; f64[] pca_components (k × dim, row-major);
//!   f64[] singular_values; f64 total_energy
//! f64[] coeff_offset; f64 coeff_scale; u8 has_differential_net
//! u64 groups; per group: u64[] vertices; f64[] offset; f64 scale
//! anchored factor: f64 weight; u64[] anchors; u64[] lap_row_ptr; u64[] lap_cols; f64[] lap_values;
//!   u64[] perm; u64[] envelope_first; f64[] factor_values
//! u64 n, u8 networks[n]   (a complete DAXM checkpoint: differential net first, then groups)
//! ```
//! `T[]` is a u64 element count followed by the elements; `str` is a u64 byte
//! count followed by UTF-8.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::anchors::{farthest_point_anchors, partition_anchors};
use super::{Deformer, DeformerConfig, DeformerError, Result};
use crate::binio::{BinError, ByteReader, ByteWriter};
use crate::dataset::{fit_normalization, DatasetFile, NormalizationStats, RigInputSpec, Split};
use crate::linalg::Matrix;
use crate::mesh::{build_laplacian, factor_anchored, AnchoredFactor, TriMesh, Vec3};
use crate::neural::checkpoint::atomic_write;
use crate::neural::{decode_checkpoint, encode_checkpoint, load_checkpoint, pca_fit, train, Mlp, PcaBasis, Retention, TrainState, TrainTask};

pub const BUNDLE_MAGIC: &[u8; 4] = b"DAXB";
pub const BUNDLE_VERSION: u32 = 1;
/// Layout tag of 6D rotation inputs: 1 = first two matrix columns, x column first.
pub const ROT6D_LAYOUT: u8 = 1;

/// Network targets are `(y − offset) / scale`; outputs are mapped back with
/// `offset + scale · out`.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputScaling {
    pub offset: Vec<f64>,
    pub scale: f64,
}

impl OutputScaling {
    /// Per-output mean and one global RMS scale. The flag is set when the
    /// targets are constant; the scale is then 1 and all targets are zero.
    pub fn fit(rows: &[Vec<f64>]) -> (Self, bool) {
        let width = rows.first().map_or(0, |r| r.len());
        let n = rows.len().max(1) as f64;
        let mut offset = vec![0.0; width];
        for r in rows {
            for (o, v) in offset.iter_mut().zip(r) {
                *o += v;
            }
        }
        offset.iter_mut().for_each(|o| *o /= n);
        let mut ss = 0.0;
        for r in rows {
            for (o, v) in offset.iter().zip(r) {
                ss += (v - o) * (v - o);
            }
        }
        let rms = (ss / (n * width.max(1) as f64)).sqrt();
        let magnitude = offset.iter().fold(1e-300f64, |m, o| m.max(o.abs()));
        let constant = rms <= 1e-12 * magnitude.max(1e-3) || !rms.is_finite();
        (Self { offset, scale: if constant { 1.0 } else { rms } }, constant)
    }

    pub(crate) fn targets(&self, rows: &[Vec<f64>], constant: bool) -> Matrix<f32> {
        let width = self.offset.len();
        let mut m = Matrix::zeros(rows.len(), width);
        if !constant {
            for (i, r) in rows.iter().enumerate() {
                for (j, v) in r.iter().enumerate() {
                    m[(i, j)] = ((v - self.offset[j]) / self.scale) as f32;
                }
            }
        }
        m
    }

    #[inline]
    pub(crate) fn apply(&self, j: usize, out: f32) -> f64 {
        self.offset[j] + self.scale * out as f64
    }
}

/// One subspace network and the anchor vertices it predicts.
#[derive(Clone, Debug)]
pub struct AnchorGroup {
    pub vertices: Vec<usize>,
    pub scaling: OutputScaling,
    pub net: TrainState<f32>,
}

#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub config: DeformerConfig,
    pub spec: RigInputSpec,
    pub vertices: usize,
    pub stats: NormalizationStats,
    /// Basis over flattened (vertex-major xyz) differential coordinates of the residual.
    pub pca: PcaBasis<f64>,
    pub coeff_scaling: OutputScaling,
    /// Inputs → PCA coefficients; absent when the basis is empty.
    pub differential: Option<TrainState<f32>>,
    pub groups: Vec<AnchorGroup>,
    pub factor: AnchoredFactor<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub checkpoint: Option<PathBuf>,
    /// Continue from `checkpoint` when it exists.
    pub resume: bool,
}

fn flat(points: &[Vec3<f64>]) -> Vec<f64> {
    points.iter().flat_map(|p| p.iter().copied()).collect()
}

fn input_matrix(stats: &NormalizationStats, rows: &[&[f64]]) -> Matrix<f32> {
    let w = stats.width();
    let mut m = Matrix::zeros(rows.len(), w);
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in stats.normalize(r).into_iter().enumerate() {
            m[(i, j)] = v as f32;
        }
    }
    m
}

fn pick<T: Clone>(all: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| all[i].clone()).collect()
}

/// Trains the differential model on `data` (whose vertices are those of `mesh`).
pub fn train_deformer(cfg: &DeformerConfig, data: &DatasetFile, split: &Split, mesh: &TriMesh<f64>, opts: &TrainOptions) -> Result<ModelBundle> {
    cfg.validate()?;
    let n = mesh.vertex_count();
    if data.vertices != n {
        return Err(DeformerError::WidthMismatch { expected: n, got: data.vertices });
    }
    if let Some(spec) = cfg.input_spec()? {
        if spec != data.spec {
            return Err(DeformerError::Config(format!("config inputs `{}` differ from dataset `{}`", spec.header_line(), data.spec.header_line())));
        }
    }
    if let Some(&bad) = split.train.iter().chain(&split.validation).find(|&&i| i >= data.len()) {
        return Err(DeformerError::Config(format!("split frame {bad} out of range")));
    }
    let stats = fit_normalization(data, &split.train)?;

    let lap = build_laplacian(mesh)?;
    let residuals: Vec<Vec<f64>> = data.frames.iter().map(|f| flat(&f.residual())).collect();
    let deltas: Vec<Vec<f64>> = residuals
        .iter()
        .map(|r| {
            let mut d = vec![0.0; 3 * n];
            lap.apply_strided(r, 3, &mut d);
            d
        })
        .collect();

    let m = split.train.len();
    let mut retention = cfg.pca;
    if let Retention::Components(k) = retention {
        let floor = m.min(3 * n);
        if k > floor {
            log::warn!("requested {k} PCA components but only {m} training frames; using {floor}");
            retention = Retention::Components(floor);
        }
    }
    let train_deltas = Matrix::from_rows(&pick(&deltas, &split.train));
    let pca = pca_fit(&train_deltas, retention, Some(cfg.pca_max_k))?;
    let k = pca.k();
    log::info!("PCA keeps {k} components for {m} training frames ({} vertices)", n);

    let coeffs: Vec<Vec<f64>> = deltas.iter().map(|d| pca.project(d)).collect::<Result<_, _>>()?;
    let (coeff_scaling, coeff_constant) = OutputScaling::fit(&pick(&coeffs, &split.train));

    let adj = mesh.adjacency();
    let s = cfg.subspace_count(n);
    let anchors = farthest_point_anchors(&adj, s * cfg.group_size);
    let partition = partition_anchors(&adj, &anchors, s, cfg.group_size);
    let factor = factor_anchored(&lap, &anchors, cfg.anchor_weight)?;

    let inputs: Vec<&[f64]> = data.frames.iter().map(|f| f.inputs.as_slice()).collect();
    let x_train = input_matrix(&stats, &pick(&inputs, &split.train));
    let x_val = input_matrix(&stats, &pick(&inputs, &split.validation));
    let width = data.spec.width();

    let rng_for = |stream: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        rng
    };
    let init = |widths: &[usize], stream: u64, constant: bool| -> Result<TrainState<f32>> {
        let mut rng = rng_for(stream);
        let mut net = Mlp::xavier(widths, &mut rng)?;
        if constant {
            net.zero_output_layer();
        }
        Ok(TrainState::from_net(net, rng))
    };

    let mut tasks = Vec::new();
    if k > 0 {
        let mut widths = vec![width];
        widths.extend(&cfg.hidden);
        widths.push(k);
        tasks.push(TrainTask {
            state: init(&widths, 0, coeff_constant)?,
            x: x_train.clone(),
            y: coeff_scaling.targets(&pick(&coeffs, &split.train), coeff_constant),
            validation: Some((x_val.clone(), coeff_scaling.targets(&pick(&coeffs, &split.validation), coeff_constant))),
        });
    }
    let mut scalings = Vec::new();
    for (g, verts) in partition.iter().enumerate() {
        let values: Vec<Vec<f64>> = residuals.iter().map(|r| verts.iter().flat_map(|&v| r[3 * v..3 * v + 3].iter().copied()).collect()).collect();
        let (scaling, constant) = OutputScaling::fit(&pick(&values, &split.train));
        tasks.push(TrainTask {
            state: init(&[width, cfg.subspace_hidden, 3 * verts.len()], 1 + g as u64, constant)?,
            x: x_train.clone(),
            y: scaling.targets(&pick(&values, &split.train), constant),
            validation: Some((x_val.clone(), scaling.targets(&pick(&values, &split.validation), constant))),
        });
        scalings.push(scaling);
    }

    if opts.resume {
        let path = opts.checkpoint.as_deref().ok_or_else(|| DeformerError::Config("resume needs a checkpoint path".into()))?;
        if path.exists() {
            let states = load_checkpoint::<f32>(path)?;
            if states.len() != tasks.len() || states.iter().zip(&tasks).any(|(s, t)| s.net.widths() != t.state.net.widths()) {
                return Err(DeformerError::Config(format!("checkpoint {} does not match this configuration", path.display())));
            }
            log::info!("resuming from {} at epoch {}", path.display(), states[0].epoch);
            for (t, s) in tasks.iter_mut().zip(states) {
                t.state = s;
            }
        }
    }
    train(&mut tasks, &cfg.train_config(), opts.checkpoint.as_deref())?;

    let mut states = tasks.into_iter().map(|t| t.state);
    let differential = if k > 0 { states.next() } else { None };
    let groups = partition
        .into_iter()
        .zip(scalings)
        .zip(states)
        .map(|((vertices, scaling), net)| AnchorGroup { vertices, scaling, net })
        .collect();
    Ok(ModelBundle { config: cfg.clone(), spec: data.spec.clone(), vertices: n, stats, pca, coeff_scaling, differential, groups, factor })
}

impl ModelBundle {
    fn check_inputs(&self, inputs: &[f64], linear: &[Vec3<f64>]) -> Result<()> {
        if inputs.len() != self.spec.width() {
            return Err(DeformerError::WidthMismatch { expected: self.spec.width(), got: inputs.len() });
        }
        if linear.len() != self.vertices {
            return Err(DeformerError::WidthMismatch { expected: self.vertices, got: linear.len() });
        }
        Ok(())
    }

    fn normalized(&self, inputs: &[f64]) -> Vec<f32> {
        self.stats.normalize(inputs).into_iter().map(|v| v as f32).collect()
    }

    fn anchor_slots(&self) -> Vec<Vec<usize>> {
        let anchors = self.factor.anchors();
        self.groups.iter().map(|g| g.vertices.iter().map(|v| anchors.binary_search(v).unwrap()).collect()).collect()
    }

    fn decode_delta(&self, coeffs: Option<&[f32]>) -> Vec<f64> {
        match coeffs {
            Some(c) => {
                let c64: Vec<f64> = c.iter().enumerate().map(|(j, &v)| self.coeff_scaling.apply(j, v)).collect();
                self.pca.reconstruct(&c64).expect("coefficient count matches basis")
            }
            None => self.pca.mean.clone(),
        }
    }

    /// Predicted residual `r̂` (vertex-major xyz) for one input row.
    pub fn predict_residual(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let x = self.normalized(inputs);
        let coeffs = self.differential.as_ref().map(|d| d.net.forward_row(&x)).transpose()?;
        let delta = self.decode_delta(coeffs.as_deref());
        let slots = self.anchor_slots();
        let mut anchor_values = vec![0.0; 3 * self.factor.anchors().len()];
        for (g, group) in self.groups.iter().enumerate() {
            let out = group.net.net.forward_row(&x)?;
            for (i, &slot) in slots[g].iter().enumerate() {
                for a in 0..3 {
                    anchor_values[3 * slot + a] = group.scaling.apply(3 * i + a, out[3 * i + a]);
                }
            }
        }
        let r = self.factor.reconstruct_interleaved(&delta, &anchor_values, 3)?;
        if r.iter().any(|v| !v.is_finite()) {
            return Err(DeformerError::NonFiniteOutput);
        }
        Ok(r)
    }

    /// Final positions for a batch of characters. Networks run once over the
    /// whole batch and all Laplacian solves share one pass over the factor;
    /// every row matches [`Deformer::infer`] bit for bit.
    pub fn infer_batch(&self, inputs: &[Vec<f64>], linear: &[Vec<Vec3<f64>>]) -> Result<Vec<Vec<Vec3<f64>>>> {
        let c = inputs.len();
        if linear.len() != c {
            return Err(DeformerError::WidthMismatch { expected: c, got: linear.len() });
        }
        for (row, (x, l)) in inputs.iter().zip(linear).enumerate() {
            if x.len() != self.spec.width() {
                return Err(DeformerError::RaggedBatch { row, expected: self.spec.width(), got: x.len() });
            }
            if l.len() != self.vertices {
                return Err(DeformerError::RaggedBatch { row, expected: self.vertices, got: l.len() });
            }
        }
        if c == 0 {
            return Ok(Vec::new());
        }
        let n = self.vertices;
        let width = 3 * c;
        let mut x = Matrix::zeros(c, self.spec.width());
        for (i, row) in inputs.iter().enumerate() {
            x.row_mut(i).copy_from_slice(&self.normalized(row));
        }
        let coeffs = self.differential.as_ref().map(|d| d.net.forward(&x)).transpose()?;
        let mut delta = vec![0.0; n * width];
        for i in 0..c {
            let d = self.decode_delta(coeffs.as_ref().map(|m| m.row(i)));
            for v in 0..n {
                delta[v * width + 3 * i..v * width + 3 * i + 3].copy_from_slice(&d[3 * v..3 * v + 3]);
            }
        }
        let slots = self.anchor_slots();
        let mut anchor_values = vec![0.0; self.factor.anchors().len() * width];
        for (g, group) in self.groups.iter().enumerate() {
            let out = group.net.net.forward(&x)?;
            for i in 0..c {
                let o = out.row(i);
                for (j, &slot) in slots[g].iter().enumerate() {
                    for a in 0..3 {
                        anchor_values[slot * width + 3 * i + a] = group.scaling.apply(3 * j + a, o[3 * j + a]);
                    }
                }
            }
        }
        let r = self.factor.reconstruct_interleaved(&delta, &anchor_values, width)?;
        if r.iter().any(|v| !v.is_finite()) {
            return Err(DeformerError::NonFiniteOutput);
        }
        Ok(linear
            .iter()
            .enumerate()
            .map(|(i, lin)| {
                lin.iter()
                    .enumerate()
                    .map(|(v, p)| {
                        let b = v * width + 3 * i;
                        [p[0] + r[b], p[1] + r[b + 1], p[2] + r[b + 2]]
                    })
                    .collect()
            })
            .collect())
    }

    /// All networks in checkpoint order: differential first, then groups.
    pub fn networks(&self) -> Vec<&TrainState<f32>> {
        self.differential.iter().chain(self.groups.iter().map(|g| &g.net)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(BUNDLE_MAGIC);
        w.u32(BUNDLE_VERSION);
        w.u8(ROT6D_LAYOUT);
        w.str(&serde_json::to_string(&self.config).expect("config serializes"));
        w.str(&self.spec.header_line());
        w.len(self.vertices);
        w.reals(&self.stats.mean);
        w.reals(&self.stats.std);
        w.len(self.stats.clamped.len());
        for &c in &self.stats.clamped {
            w.u8(u8::from(c));
        }
        w.len(self.pca.dim());
        w.len(self.pca.k());
        w.reals(&self.pca.mean);
        w.reals(self.pca.components.as_slice());
        w.reals(&self.pca.singular_values);
        w.f64(self.pca.total_energy);
        w.reals(&self.coeff_scaling.offset);
        w.f64(self.coeff_scaling.scale);
        w.u8(u8::from(self.differential.is_some()));
        w.len(self.groups.len());
        for g in &self.groups {
            w.usizes(&g.vertices);
            w.reals(&g.scaling.offset);
            w.f64(g.scaling.scale);
        }
        self.factor.encode(&mut w);
        let states: Vec<TrainState<f32>> = self.networks().into_iter().cloned().collect();
        let blob = encode_checkpoint(&states);
        w.len(blob.len());
        w.bytes(&blob);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(BUNDLE_MAGIC)?;
        r.version(BUNDLE_VERSION)?;
        let layout = r.u8()?;
        if layout != ROT6D_LAYOUT {
            return Err(DeformerError::Format(BinError::Malformed(format!("unknown 6D rotation layout {layout}"))));
        }
        let config: DeformerConfig = serde_json::from_str(&r.str()?)?;
        let spec = RigInputSpec::parse_header_line(&r.str()?)?;
        let vertices = r.len()?;
        let mean = r.reals()?;
        let std = r.reals()?;
        let nc = r.len()?;
        let clamped = (0..nc).map(|_| r.u8().map(|b| b != 0)).collect::<Result<Vec<_>, _>>()?;
        let stats = NormalizationStats { mean, std, clamped };
        let dim = r.len()?;
        let k = r.len()?;
        let pca_mean: Vec<f64> = r.reals()?;
        let comps: Vec<f64> = r.reals()?;
        let singular_values: Vec<f64> = r.reals()?;
        let total_energy = r.f64()?;
        let malformed = |m: &str| DeformerError::Format(BinError::Malformed(m.into()));
        if pca_mean.len() != dim || comps.len() != k * dim || singular_values.len() != k || dim != 3 * vertices {
            return Err(malformed("PCA shapes"));
        }
        let pca = PcaBasis { mean: pca_mean, components: Matrix::from_vec(k, dim, comps), singular_values, total_energy };
        let coeff_scaling = OutputScaling { offset: r.reals()?, scale: r.f64()? };
        let has_diff = r.u8()? != 0;
        let ng = r.len()?;
        let mut parts = Vec::new();
        for _ in 0..ng {
            let verts = r.usizes()?;
            let scaling = OutputScaling { offset: r.reals()?, scale: r.f64()? };
            parts.push((verts, scaling));
        }
        let factor = AnchoredFactor::decode(&mut r)?;
        let blob_len = r.len()?;
        let states = decode_checkpoint::<f32>(r.take(blob_len)?)?;
        if !r.is_at_end() {
            return Err(malformed("trailing bytes"));
        }
        let width = spec.width();
        if stats.width() != width || stats.std.len() != width || stats.clamped.len() != width {
            return Err(malformed("normalization width"));
        }
        if factor.vertex_count() != vertices || states.len() != usize::from(has_diff) + ng || has_diff != (k > 0) {
            return Err(malformed("network count"));
        }
        let mut states = states.into_iter();
        let differential = if has_diff { states.next() } else { None };
        if let Some(d) = &differential {
            if d.net.input_width() != width || d.net.output_width() != k || coeff_scaling.offset.len() != k {
                return Err(malformed("differential network shape"));
            }
        }
        let anchors = factor.anchors();
        let mut seen = Vec::new();
        let mut groups = Vec::new();
        for ((vertices, scaling), net) in parts.into_iter().zip(states) {
            let w3 = 3 * vertices.len();
            if net.net.input_width() != width || net.net.output_width() != w3 || scaling.offset.len() != w3 {
                return Err(malformed("subspace network shape"));
            }
            if vertices.iter().any(|v| anchors.binary_search(v).is_err()) {
                return Err(malformed("group vertex is not an anchor"));
            }
            seen.extend_from_slice(&vertices);
            groups.push(AnchorGroup { vertices, scaling, net });
        }
        seen.sort_unstable();
        if seen != anchors {
            return Err(malformed("anchor groups do not partition the anchors"));
        }
        Ok(Self { config, spec, vertices, stats, pca, coeff_scaling, differential, groups, factor })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

impl Deformer for ModelBundle {
    fn input_width(&self) -> usize {
        self.spec.width()
    }

    fn vertex_count(&self) -> usize {
        self.vertices
    }

    fn infer(&self, inputs: &[f64], linear: &[Vec3<f64>]) -> Result<Vec<Vec3<f64>>> {
        self.check_inputs(inputs, linear)?;
        let r = self.predict_residual(inputs)?;
        Ok(linear.iter().enumerate().map(|(v, p)| [p[0] + r[3 * v], p[1] + r[3 * v + 1], p[2] + r[3 * v + 2]]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{extract_frames, split, FrameRecord, SplitSpec};
    use crate::synthrig::{generate_arm_rig, sample_animation, Rig, SampleMode};

    fn small_cfg() -> DeformerConfig {
        DeformerConfig { hidden: vec![16], subspace_hidden: 8, epochs: 40, lr: 1e-2, ..DeformerConfig::default() }
    }

    fn arm(frames: usize) -> (Rig, DatasetFile) {
        let rig = generate_arm_rig(12, 8).unwrap();
        let seq = sample_animation(&rig, frames, SampleMode::Clip, 0).unwrap();
        let data = extract_frames(&rig, &seq, &RigInputSpec::from_controllers(&rig)).unwrap();
        (rig, data)
    }

    #[test]
    fn zero_networks_return_linear_mesh() {
        let (rig, data) = arm(30);
        let sp = split(30, SplitSpec::default()).unwrap();
        let mut b = train_deformer(&small_cfg(), &data, &sp, &rig.mesh, &TrainOptions::default()).unwrap();
        b.pca.mean.fill(0.0);
        b.coeff_scaling.offset.fill(0.0);
        if let Some(d) = b.differential.as_mut() {
            d.net.params_mut().fill(0.0);
        }
        for g in &mut b.groups {
            g.net.net.params_mut().fill(0.0);
            g.scaling.offset.fill(0.0);
        }
        for f in &data.frames {
            assert_eq!(b.infer(&f.inputs, &f.linear_positions).unwrap(), f.linear_positions);
        }
    }

    #[test]
    fn constant_dataset_reproduces_constant_residual() {
        let (rig, data) = arm(1);
        let mut frame: FrameRecord = data.frames[0].clone();
        frame.final_positions.iter_mut().enumerate().for_each(|(i, p)| p[1] += 0.01 * (i % 5) as f64);
        let mut constant = DatasetFile::new(data.spec.clone(), data.vertices);
        for _ in 0..8 {
            constant.push(frame.clone()).unwrap();
        }
        let sp = split(8, SplitSpec { stride: 4, offset: 0 }).unwrap();
        let b = train_deformer(&small_cfg(), &constant, &sp, &rig.mesh, &TrainOptions::default()).unwrap();
        assert_eq!(b.pca.k(), 0);
        assert!(b.differential.is_none());
        let out = b.infer(&frame.inputs, &frame.linear_positions).unwrap();
        for (p, t) in out.iter().zip(&frame.final_positions) {
            for a in 0..3 {
                assert!((p[a] - t[a]).abs() < 1e-9, "{p:?} vs {t:?}");
            }
        }
    }

    #[test]
    fn batch_matches_sequential_and_bundle_round_trips() {
        let (rig, data) = arm(40);
        let sp = split(40, SplitSpec::default()).unwrap();
        let cfg = small_cfg();
        let b = train_deformer(&cfg, &data, &sp, &rig.mesh, &TrainOptions::default()).unwrap();
        let inputs: Vec<Vec<f64>> = data.frames.iter().map(|f| f.inputs.clone()).collect();
        let linear: Vec<Vec<Vec3<f64>>> = data.frames.iter().map(|f| f.linear_positions.clone()).collect();
        let batch = b.infer_batch(&inputs, &linear).unwrap();
        for (i, f) in data.frames.iter().enumerate() {
            assert_eq!(batch[i], b.infer(&f.inputs, &f.linear_positions).unwrap());
        }
        let one = b.infer_batch(&inputs[..1], &linear[..1]).unwrap();
        assert_eq!(one[0], batch[0]);
        assert!(matches!(b.infer_batch(&[vec![0.0]], &linear[..1]), Err(DeformerError::RaggedBatch { .. })));

        let bytes = b.to_bytes();
        let back = ModelBundle::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.infer(&inputs[3], &linear[3]).unwrap(), batch[3]);
        let again = train_deformer(&cfg, &data, &sp, &rig.mesh, &TrainOptions::default()).unwrap();
        assert_eq!(again.to_bytes(), bytes);
        assert!(ModelBundle::from_bytes(&bytes[..bytes.len() - 10]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(ModelBundle::from_bytes(&wrong), Err(DeformerError::Format(BinError::Magic { .. }))));
    }

    #[test]
    fn anchor_groups_partition_anchors() {
        let (rig, data) = arm(20);
        let sp = split(20, SplitSpec::default()).unwrap();
        let cfg = DeformerConfig { subspaces: Some(3), epochs: 1, ..small_cfg() };
        let b = train_deformer(&cfg, &data, &sp, &rig.mesh, &TrainOptions::default()).unwrap();
        assert_eq!(b.groups.len(), 3);
        let mut all: Vec<usize> = b.groups.iter().flat_map(|g| g.vertices.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, b.factor.anchors());
        assert_eq!(all.len(), 12);
    }
}
