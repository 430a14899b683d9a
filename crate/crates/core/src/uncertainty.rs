//! Deep-ensemble uncertainty: K differential models that differ only in their
//! seed; the per-vertex spread of their predictions is the uncertainty.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetFile, Split};
use crate::deformer::{train_deformer, Deformer, DeformerConfig, DeformerError, ModelBundle, TrainOptions};
use crate::mesh::{TriMesh, Vec3};
use crate::neural::checkpoint::atomic_write;

pub const DEFAULT_MEMBERS: usize = 5;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "deformapprox-ensemble";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum UncertaintyError {
    #[error("an ensemble needs at least 2 members, got {0}")]
    TooFewMembers(usize),
    #[error("ensemble seeds must differ; seed {0} appears twice")]
    DuplicateSeed(u64),
    #[error("member {member} differs from member 0: {what}")]
    Mismatch { member: usize, what: String },
    #[error("ensemble manifest: {0}")]
    Manifest(String),
    #[error("member {member}: {source}")]
    Member { member: usize, source: DeformerError },
    #[error(transparent)]
    Deformer(#[from] DeformerError),
    #[error("manifest JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl UncertaintyError {
    pub fn is_numerical(&self) -> bool {
        match self {
            Self::Member { source, .. } | Self::Deformer(source) => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = UncertaintyError> = std::result::Result<T, E>;

#[derive(Clone, Debug)]
pub struct EnsembleBundle {
    pub members: Vec<ModelBundle>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub members: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file: String,
    pub seed: u64,
}

fn member_file(i: usize) -> String {
    format!("member_{i}.daxb")
}

impl EnsembleBundle {
    /// Checks K ≥ 2, distinct seeds and identical configs apart from the seed.
    pub fn new(members: Vec<ModelBundle>) -> Result<Self> {
        if members.len() < 2 {
            return Err(UncertaintyError::TooFewMembers(members.len()));
        }
        let mut seeds: Vec<u64> = Vec::with_capacity(members.len());
        for m in &members {
            if seeds.contains(&m.config.seed) {
                return Err(UncertaintyError::DuplicateSeed(m.config.seed));
            }
            seeds.push(m.config.seed);
        }
        let reference = DeformerConfig { seed: 0, ..members[0].config.clone() };
        for (i, m) in members.iter().enumerate().skip(1) {
            let mismatch = |what: &str| Err(UncertaintyError::Mismatch { member: i, what: what.into() });
            if (DeformerConfig { seed: 0, ..m.config.clone() }) != reference {
                return mismatch("configuration");
            }
            if m.spec != members[0].spec {
                return mismatch("input spec");
            }
            if m.vertices != members[0].vertices {
                return mismatch("vertex count");
            }
        }
        Ok(Self { members })
    }

    /// Same as [`EnsembleBundle::new`] minus the seed check; for tests that
    /// need degenerate (cloned) ensembles.
    pub fn from_members_unchecked(members: Vec<ModelBundle>) -> Self {
        Self { members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.members.iter().map(|m| m.config.seed).collect()
    }

    /// Writes one bundle per member plus `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.len());
        for (i, m) in self.members.iter().enumerate() {
            let file = member_file(i);
            m.save(&dir.join(&file))?;
            entries.push(ManifestEntry { file, seed: m.config.seed });
        }
        let manifest = Manifest { format: MANIFEST_FORMAT.into(), version: MANIFEST_VERSION, members: entries };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        atomic_write(&dir.join(MANIFEST_FILE), text.as_bytes())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(UncertaintyError::Manifest(format!("unknown format `{}`", manifest.format)));
        }
        if manifest.version != MANIFEST_VERSION {
            return Err(UncertaintyError::Manifest(format!("unsupported version {}", manifest.version)));
        }
        let mut members = Vec::with_capacity(manifest.members.len());
        for (i, e) in manifest.members.iter().enumerate() {
            if e.file.contains(['/', '\\']) || e.file == ".." {
                return Err(UncertaintyError::Manifest(format!("member file `{}` must be a plain file name", e.file)));
            }
            let m = ModelBundle::load(&dir.join(&e.file)).map_err(|source| UncertaintyError::Member { member: i, source })?;
            if m.config.seed != e.seed {
                return Err(UncertaintyError::Manifest(format!("member {i}: manifest seed {} but bundle seed {}", e.seed, m.config.seed)));
            }
            members.push(m);
        }
        Self::new(members)
    }
}

/// Per-member checkpoint path inside `dir`.
pub fn member_checkpoint(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("member_{i}.ckpt"))
}

#[derive(Clone, Debug)]
pub struct EnsembleOptions {
    pub members: usize,
    pub base_seed: u64,
    /// Each member keeps its own checkpoint here.
    pub checkpoint_dir: Option<PathBuf>,
    pub resume: bool,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self { members: DEFAULT_MEMBERS, base_seed: 0, checkpoint_dir: None, resume: false }
    }
}

/// Trains K independent members with seeds `base_seed..base_seed + K`.
pub fn train_ensemble(cfg: &DeformerConfig, data: &DatasetFile, split: &Split, mesh: &TriMesh<f64>, opts: &EnsembleOptions) -> Result<EnsembleBundle> {
    let (k, base_seed) = (opts.members, opts.base_seed);
    if k < 2 {
        return Err(UncertaintyError::TooFewMembers(k));
    }
    let mut members = Vec::with_capacity(k);
    for i in 0..k {
        let seed = base_seed.checked_add(i as u64).ok_or(UncertaintyError::DuplicateSeed(base_seed))?;
        log::info!("training ensemble member {}/{k} (seed {seed})", i + 1);
        let member_cfg = DeformerConfig { seed, ..cfg.clone() };
        let topts = TrainOptions { checkpoint: opts.checkpoint_dir.as_deref().map(|d| member_checkpoint(d, i)), resume: opts.resume };
        let m = train_deformer(&member_cfg, data, split, mesh, &topts).map_err(|source| UncertaintyError::Member { member: i, source })?;
        members.push(m);
    }
    EnsembleBundle::new(members)
}

/// Mean of the member predictions and, per vertex, the root-mean over axes of
/// the population variance across members.
pub fn predict_with_uncertainty(ens: &EnsembleBundle, inputs: &[f64], linear: &[Vec3<f64>]) -> Result<(Vec<Vec3<f64>>, Vec<f64>)> {
    if ens.is_empty() {
        return Err(UncertaintyError::TooFewMembers(0));
    }
    let outs = ens.members.iter().map(|m| m.infer(inputs, linear)).collect::<Result<Vec<_>, _>>()?;
    Ok(combine(&outs))
}

/// Batched form: one `infer_batch` per member.
pub fn predict_batch_with_uncertainty(
    ens: &EnsembleBundle,
    inputs: &[Vec<f64>],
    linear: &[Vec<Vec3<f64>>],
) -> Result<Vec<(Vec<Vec3<f64>>, Vec<f64>)>> {
    if ens.is_empty() {
        return Err(UncertaintyError::TooFewMembers(0));
    }
    let per_member = ens.members.iter().map(|m| m.infer_batch(inputs, linear)).collect::<Result<Vec<_>, _>>()?;
    Ok((0..inputs.len())
        .map(|c| {
            let outs: Vec<Vec<Vec3<f64>>> = per_member.iter().map(|m| m[c].clone()).collect();
            combine(&outs)
        })
        .collect())
}

/// Statistics are accumulated as offsets from the first member, so members
/// that agree exactly give their common prediction and zero uncertainty.
fn combine(outs: &[Vec<Vec3<f64>>]) -> (Vec<Vec3<f64>>, Vec<f64>) {
    let k = outs.len() as f64;
    let base = &outs[0];
    let mut shift = vec![[0.0; 3]; base.len()];
    for o in &outs[1..] {
        for ((s, p), b) in shift.iter_mut().zip(o).zip(base) {
            for a in 0..3 {
                s[a] += p[a] - b[a];
            }
        }
    }
    for s in &mut shift {
        for a in 0..3 {
            s[a] /= k;
        }
    }
    let mean = base.iter().zip(&shift).map(|(b, s)| [b[0] + s[0], b[1] + s[1], b[2] + s[2]]).collect();
    let u = (0..base.len())
        .map(|v| {
            let mut var = 0.0;
            for o in outs {
                for a in 0..3 {
                    let d = (o[v][a] - base[v][a]) - shift[v][a];
                    var += d * d;
                }
            }
            (var / (3.0 * k)).sqrt()
        })
        .collect();
    (mean, u)
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}
