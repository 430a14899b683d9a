//! Config-driven pipeline stages behind the command-line tool: rig
//! generation, extraction, training, evaluation and benchmarking.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{bench_batch, compare_pipelines, default_threads, time_inference, write_tables, BenchFrame, BenchOptions, TimingReport};
use crate::dataset::{extract, split, DatasetError, DatasetFile, RigInputSpec, Split, SplitSpec};
use crate::deformer::{evaluate, train_deformer, DeformerConfig, DeformerError, LinearBaseline, ModelBundle, TrainOptions};
use crate::report::{error_field, export_heatmap, export_metrics, ErrorStats, HeatmapSpec};
use crate::synthrig::io::{load_rig, save_rig};
use crate::synthrig::{generate_arm_rig, generate_face_rig_seeded, sample_animation, Rig, RigError, SampleMode, FACE_SEED};
use crate::uncertainty::{predict_with_uncertainty, train_ensemble, EnsembleBundle, EnsembleOptions, UncertaintyError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("reading config {path}: {source}")]
    ConfigFile { path: PathBuf, source: std::io::Error },
    #[error("config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Rig(#[from] RigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Deformer(#[from] DeformerError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl PipelineError {
    pub fn is_numerical(&self) -> bool {
        match self {
            Self::Deformer(e) => e.is_numerical(),
            Self::Uncertainty(e) => e.is_numerical(),
            _ => false,
        }
    }

    /// 3 for numerical failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            3
        } else {
            2
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RigKind {
    Arm,
    Face,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigSection {
    pub kind: RigKind,
    pub segments: usize,
    pub radial: usize,
    pub grid: usize,
    pub bumps: usize,
    pub seed: u64,
}

impl Default for RigSection {
    fn default() -> Self {
        Self { kind: RigKind::Arm, segments: 20, radial: 12, grid: 16, bumps: 6, seed: FACE_SEED }
    }
}

impl RigSection {
    pub fn generate(&self) -> Result<Rig> {
        Ok(match self.kind {
            RigKind::Arm => generate_arm_rig(self.segments, self.radial)?,
            RigKind::Face => generate_face_rig_seeded(self.grid, self.bumps, self.seed)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub frames: usize,
    pub mode: SampleMode,
    pub seed: u64,
    pub append: bool,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self { frames: 240, mode: SampleMode::Clip, seed: 0, append: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub members: usize,
    pub base_seed: u64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self { members: crate::uncertainty::DEFAULT_MEMBERS, base_seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub reps: usize,
    pub warmup: usize,
    /// Defaults to `DEFORMAPPROX_THREADS`, else 1.
    pub threads: Option<usize>,
    /// Characters for the batch comparison; 0 skips it.
    pub characters: usize,
    /// Ground-truth repetitions per timed frame.
    pub busy_work: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self { reps: 100, warmup: crate::bench::DEFAULT_WARMUP, threads: None, characters: 0, busy_work: 1 }
    }
}

impl BenchSection {
    pub fn options(&self) -> BenchOptions {
        BenchOptions { reps: self.reps, warmup: self.warmup, threads: self.threads.unwrap_or_else(default_threads) }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    pub heatmap: HeatmapSpec,
    /// Dataset frame painted in the heat maps; defaults to the first validation frame.
    pub frame: Option<usize>,
}

/// Every path is relative to the config file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub rig: String,
    pub mesh: String,
    pub dataset: String,
    pub model: String,
    pub checkpoint: String,
    pub ensemble: String,
    pub out: String,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            rig: "rig.json".into(),
            mesh: "rig.obj".into(),
            dataset: "dataset.txt".into(),
            model: "model.daxb".into(),
            checkpoint: "train.ckpt".into(),
            ensemble: "ensemble".into(),
            out: "out".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub rig: RigSection,
    pub dataset: DatasetSection,
    pub split: SplitSpec,
    pub model: DeformerConfig,
    pub ensemble: EnsembleSection,
    pub bench: BenchSection,
    pub report: ReportSection,
    pub paths: PathsSection,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.model.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

/// A parsed config plus the directory its paths are relative to.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub base: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

impl Pipeline {
    pub fn load(config_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(config_path).map_err(|source| PipelineError::ConfigFile { path: config_path.to_path_buf(), source })?;
        let config = PipelineConfig::parse(&text)?;
        let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base })
    }

    pub fn new(config: PipelineConfig, base: impl Into<PathBuf>) -> Result<Self> {
        config.model.validate()?;
        Ok(Self { config, base: base.into() })
    }

    pub fn path(&self, p: &str) -> PathBuf {
        self.base.join(p)
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.path(&self.config.paths.out);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(dir)
    }

    /// The rig file if present, else a freshly generated (and saved) rig.
    pub fn rig(&self) -> Result<Rig> {
        let json = self.path(&self.config.paths.rig);
        if json.exists() {
            return Ok(load_rig(&json)?);
        }
        let rig = self.config.rig.generate()?;
        save_rig(&rig, &json, &self.path(&self.config.paths.mesh))?;
        Ok(rig)
    }

    pub fn input_spec(&self, rig: &Rig) -> Result<RigInputSpec> {
        if let Some(name) = &self.config.model.mesh {
            if name != &rig.name {
                return Err(PipelineError::Config(format!("config targets mesh `{name}` but the rig is `{}`", rig.name)));
            }
        }
        let spec = self.config.model.input_spec()?.unwrap_or_else(|| RigInputSpec::from_controllers(rig));
        spec.check_against(rig)?;
        Ok(spec)
    }

    pub fn dataset(&self) -> Result<DatasetFile> {
        Ok(DatasetFile::read(&self.path(&self.config.paths.dataset))?)
    }

    pub fn split(&self, data: &DatasetFile) -> Result<Split> {
        Ok(split(data.len(), self.config.split)?)
    }

    pub fn model(&self) -> Result<ModelBundle> {
        Ok(ModelBundle::load(&self.path(&self.config.paths.model))?)
    }
}

/// Generates a rig and writes its JSON + OBJ.
pub fn rig_gen(section: &RigSection, json: &Path, obj: &Path) -> Result<Rig> {
    let rig = section.generate()?;
    for p in [json, obj] {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    save_rig(&rig, json, obj)?;
    Ok(rig)
}

/// Samples the configured clip and writes (or appends to) the dataset.
pub fn cmd_extract(p: &Pipeline, append: bool) -> Result<DatasetFile> {
    let rig = p.rig()?;
    let spec = p.input_spec(&rig)?;
    let d = &p.config.dataset;
    let seq = sample_animation(&rig, d.frames, d.mode, d.seed)?;
    let out = extract(&rig, &seq, &spec, &p.path(&p.config.paths.dataset), append || d.append)?;
    log::info!("dataset: {} frames x {} vertices", out.len(), out.vertices);
    Ok(out)
}

pub enum Trained {
    Single(ModelBundle),
    Ensemble(EnsembleBundle),
}

/// Trains the deformer (or an ensemble of `members`) and saves it.
pub fn cmd_train(p: &Pipeline, resume: bool, ensemble: Option<usize>) -> Result<Trained> {
    let rig = p.rig()?;
    let data = p.dataset()?;
    let spec = p.input_spec(&rig)?;
    if data.spec != spec {
        return Err(PipelineError::Config(format!("dataset inputs `{}` differ from the configured `{}`", data.spec.header_line(), spec.header_line())));
    }
    let sp = p.split(&data)?;
    let cfg = &p.config.model;
    match ensemble {
        None => {
            let opts = TrainOptions { checkpoint: Some(p.path(&p.config.paths.checkpoint)), resume };
            let m = train_deformer(cfg, &data, &sp, &rig.mesh, &opts)?;
            m.save(&p.path(&p.config.paths.model))?;
            Ok(Trained::Single(m))
        }
        Some(k) => {
            let dir = p.path(&p.config.paths.ensemble);
            std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let opts = EnsembleOptions { members: k, base_seed: p.config.ensemble.base_seed, checkpoint_dir: Some(dir.clone()), resume };
            let ens = train_ensemble(cfg, &data, &sp, &rig.mesh, &opts)?;
            ens.save(&dir)?;
            Ok(Trained::Ensemble(ens))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub bbox_diagonal: f64,
    pub train: ErrorStats,
    pub validation: ErrorStats,
    pub linear_train: ErrorStats,
    pub linear_validation: ErrorStats,
    pub heatmap_frame: usize,
    /// Mean per-vertex ensemble uncertainty on the validation frames.
    pub mean_uncertainty: Option<f64>,
    /// Correlation of per-vertex uncertainty with per-vertex error, validation frames pooled.
    pub uncertainty_error_correlation: Option<f64>,
}

/// Metrics CSVs, error heat map, optional uncertainty heat map and a JSON summary.
pub fn cmd_eval(p: &Pipeline, uncertainty: bool) -> Result<EvalSummary> {
    let rig = p.rig()?;
    let data = p.dataset()?;
    let sp = p.split(&data)?;
    let model = p.model()?;
    let out = p.out_dir()?;
    let train = evaluate(&model, &data, &sp.train)?;
    let val = evaluate(&model, &data, &sp.validation)?;
    let lin = LinearBaseline { inputs: data.spec.width(), vertices: data.vertices };
    export_metrics(&train.rows, &out.join("metrics_train.csv")).map_err(DeformerError::from)?;
    export_metrics(&val.rows, &out.join("metrics_validation.csv")).map_err(DeformerError::from)?;

    let frame = p.config.report.frame.or(sp.validation.first().copied()).unwrap_or(0);
    let f = data.frames.get(frame).ok_or_else(|| PipelineError::Config(format!("report frame {frame} out of range")))?;
    let pred = crate::deformer::Deformer::infer(&model, &f.inputs, &f.linear_positions)?;
    let field = error_field(&pred, &f.final_positions).map_err(DeformerError::from)?;
    let tris = rig.mesh.triangles();
    export_heatmap(&pred, tris, &field, &p.config.report.heatmap, &out.join("error_heatmap.ply")).map_err(DeformerError::from)?;

    let (mut mean_uncertainty, mut corr) = (None, None);
    if uncertainty {
        let ens = EnsembleBundle::load(&p.path(&p.config.paths.ensemble))?;
        let (mean, u) = predict_with_uncertainty(&ens, &f.inputs, &f.linear_positions)?;
        export_heatmap(&mean, tris, &u, &p.config.report.heatmap, &out.join("uncertainty_heatmap.ply")).map_err(DeformerError::from)?;
        let (mut us, mut es) = (Vec::new(), Vec::new());
        for &i in &sp.validation {
            let fr = &data.frames[i];
            let (m, u) = predict_with_uncertainty(&ens, &fr.inputs, &fr.linear_positions)?;
            es.extend(error_field(&m, &fr.final_positions).map_err(DeformerError::from)?);
            us.extend(u);
        }
        mean_uncertainty = Some(us.iter().sum::<f64>() / us.len().max(1) as f64);
        corr = crate::uncertainty::pearson(&us, &es);
    }
    let summary = EvalSummary {
        bbox_diagonal: rig.mesh.bbox_diagonal(),
        train: train.aggregate,
        validation: val.aggregate,
        linear_train: evaluate(&lin, &data, &sp.train)?.aggregate,
        linear_validation: evaluate(&lin, &data, &sp.validation)?.aggregate,
        heatmap_frame: frame,
        mean_uncertainty,
        uncertainty_error_correlation: corr,
    };
    let path = out.join("eval_summary.json");
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(io_err(&path))?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub rows: Vec<TimingReport>,
    pub pipeline_speedup: f64,
    pub batch_speedup: Option<f64>,
    pub batch_max_abs_diff: Option<f64>,
}

/// Timing tables: single inference, ground truth vs approximation and,
/// when `bench.characters > 0`, sequential vs batched.
pub fn cmd_bench(p: &Pipeline) -> Result<BenchSummary> {
    let rig = p.rig()?;
    let data = p.dataset()?;
    let model = p.model()?;
    let opts = p.config.bench.options();
    let frames: Vec<BenchFrame> = data.frames.iter().map(|f| BenchFrame { inputs: f.inputs.clone(), linear: f.linear_positions.clone() }).collect();
    let d = &p.config.dataset;
    let poses = sample_animation(&rig, d.frames, d.mode, d.seed)?.frames;
    let mut rows = vec![time_inference("infer", &model, &frames, &opts)?];
    let cmp = compare_pipelines(&rig, &model, &data.spec, &poses, &opts, p.config.bench.busy_work)?;
    rows.push(cmp.ground_truth.clone());
    rows.push(cmp.approximation.clone());
    let (mut batch_speedup, mut diff) = (None, None);
    if p.config.bench.characters > 0 {
        let b = bench_batch(&model, &frames, p.config.bench.characters, &opts)?;
        batch_speedup = Some(b.speedup);
        diff = Some(b.max_abs_diff);
        rows.push(b.sequential);
        rows.push(b.batched);
    }
    let out = p.out_dir()?;
    write_tables(&rows, &out.join("bench.csv"), &out.join("bench.md"))?;
    log::info!("ground truth / approximation speedup: {:.2}x (this machine only)", cmp.speedup);
    if let Some(s) = batch_speedup {
        log::info!("batched / sequential throughput: {s:.2}x");
    }
    Ok(BenchSummary { rows, pipeline_speedup: cmp.speedup, batch_speedup, batch_max_abs_diff: diff })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoSummary {
    pub rig: String,
    pub vertices: usize,
    pub frames: usize,
    pub pca_components: usize,
    pub subspaces: usize,
    pub eval: EvalSummary,
}

/// Config used by `demo`: defaults, with the face rig when `face` is set.
pub fn demo_config(face: bool) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    if face {
        cfg.rig.kind = RigKind::Face;
    }
    cfg.bench.reps = 50;
    cfg.bench.characters = 64;
    cfg
}

/// End to end in `dir`: rig, dataset, training, evaluation, benchmark.
/// Everything except the timing files is deterministic.
pub fn cmd_demo(dir: &Path, cfg: PipelineConfig) -> Result<DemoSummary> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let cfg_path = dir.join("pipeline.json");
    std::fs::write(&cfg_path, cfg.to_json()).map_err(io_err(&cfg_path))?;
    let p = Pipeline::load(&cfg_path)?;
    for stale in [&p.config.paths.rig, &p.config.paths.dataset, &p.config.paths.checkpoint] {
        let path = p.path(stale);
        if path.exists() {
            std::fs::remove_file(&path).map_err(io_err(&path))?;
        }
    }
    let rig = rig_gen(&p.config.rig, &p.path(&p.config.paths.rig), &p.path(&p.config.paths.mesh))?;
    let data = cmd_extract(&p, false)?;
    let Trained::Single(model) = cmd_train(&p, false, None)? else { unreachable!("single model requested") };
    let eval = cmd_eval(&p, false)?;
    cmd_bench(&p)?;
    let summary = DemoSummary {
        rig: rig.name.clone(),
        vertices: rig.mesh.vertex_count(),
        frames: data.len(),
        pca_components: model.pca.k(),
        subspaces: model.groups.len(),
        eval,
    };
    let path = p.out_dir()?.join("demo_summary.json");
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(io_err(&path))?;
    Ok(summary)
}
