//! Timing harness: per-call deformer cost, ground truth vs linear + learned
//! correction, and sequential vs batched multi-character inference.
//!
//! Numbers are wall-clock on the current machine and build. They are only
//! meaningful relative to each other within one run; concurrent benchmark
//! runs on the same machine will disturb each other.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::RigInputSpec;
use crate::deformer::{Deformer, DeformerError, ModelBundle, Result};
use crate::mesh::Vec3;
use crate::report::percentile_sorted;
use crate::synthrig::{Pose, Rig};

pub const THREADS_ENV: &str = "DEFORMAPPROX_THREADS";
pub const DEFAULT_WARMUP: usize = 10;
pub const BACKEND: &str = "cpu";

/// Thread count from `DEFORMAPPROX_THREADS`, else 1.
pub fn default_threads() -> usize {
    std::env::var(THREADS_ENV).ok().and_then(|s| s.trim().parse().ok()).filter(|&t| t >= 1).unwrap_or(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchOptions {
    /// Timed samples.
    pub reps: usize,
    /// Samples run first and discarded.
    pub warmup: usize,
    pub threads: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { reps: 100, warmup: DEFAULT_WARMUP, threads: 1 }
    }
}

impl BenchOptions {
    fn check(&self) -> Result<()> {
        if self.reps == 0 || self.threads == 0 {
            return Err(DeformerError::Config("reps and threads must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub label: String,
    pub backend: String,
    pub inputs: usize,
    pub vertices: usize,
    /// Characters deformed per sample.
    pub characters: usize,
    /// Timed samples (warmup excluded).
    pub frames: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    /// Samples per second at the mean time.
    pub fps: f64,
    pub threads: usize,
}

impl TimingReport {
    pub fn from_samples(label: &str, inputs: usize, vertices: usize, characters: usize, samples_ms: &[f64], threads: usize) -> Self {
        let mut sorted = samples_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = if sorted.is_empty() { 0.0 } else { sorted.iter().sum::<f64>() / sorted.len() as f64 };
        Self {
            label: label.into(),
            backend: BACKEND.into(),
            inputs,
            vertices,
            characters,
            frames: sorted.len(),
            mean_ms: mean,
            median_ms: percentile_sorted(&sorted, 0.5),
            p95_ms: percentile_sorted(&sorted, 0.95),
            fps: if mean > 0.0 { 1000.0 / mean } else { f64::INFINITY },
            threads,
        }
    }

    /// Characters per second at the median time.
    pub fn character_throughput(&self) -> f64 {
        self.characters as f64 * 1000.0 / self.median_ms
    }
}

/// Runs `warmup + reps` samples of `f(i)` and returns the timed ones in ms.
pub fn time_samples(opts: &BenchOptions, mut f: impl FnMut(usize) -> Result<()>) -> Result<Vec<f64>> {
    opts.check()?;
    for i in 0..opts.warmup {
        f(i)?;
    }
    let mut out = Vec::with_capacity(opts.reps);
    for i in 0..opts.reps {
        let t = Instant::now();
        f(opts.warmup + i)?;
        out.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok(out)
}

/// One input row and linear mesh per frame.
#[derive(Clone, Debug)]
pub struct BenchFrame {
    pub inputs: Vec<f64>,
    pub linear: Vec<Vec3<f64>>,
}

/// Times single `infer` calls, cycling through `frames`.
pub fn time_inference(label: &str, model: &dyn Deformer, frames: &[BenchFrame], opts: &BenchOptions) -> Result<TimingReport> {
    if frames.is_empty() {
        return Err(DeformerError::Config("no frames to time".into()));
    }
    let samples = time_samples(opts, |i| {
        let f = &frames[i % frames.len()];
        std::hint::black_box(model.infer(&f.inputs, &f.linear)?);
        Ok(())
    })?;
    Ok(TimingReport::from_samples(label, model.input_width(), model.vertex_count(), 1, &samples, 1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineComparison {
    pub ground_truth: TimingReport,
    pub approximation: TimingReport,
    /// Ground-truth median over approximation median.
    pub speedup: f64,
}

/// Ground-truth rig evaluation against linear skinning + learned correction
/// on the same poses. `busy_work` repeats the ground-truth evaluation to
/// emulate a heavier rig.
pub fn compare_pipelines(rig: &Rig, model: &dyn Deformer, spec: &RigInputSpec, poses: &[Pose], opts: &BenchOptions, busy_work: usize) -> Result<PipelineComparison> {
    if poses.is_empty() {
        return Err(DeformerError::Config("no poses to time".into()));
    }
    if busy_work == 0 {
        return Err(DeformerError::Config("busy_work must be >= 1".into()));
    }
    let n = rig.mesh.vertex_count();
    let gt = time_samples(opts, |i| {
        let p = &poses[i % poses.len()];
        for _ in 0..busy_work {
            std::hint::black_box(rig.evaluate_ground_truth(p).map_err(crate::dataset::DatasetError::from)?);
        }
        Ok(())
    })?;
    let approx = time_samples(opts, |i| {
        let p = &poses[i % poses.len()];
        let lin = rig.evaluate_linear(p).map_err(crate::dataset::DatasetError::from)?;
        let x = spec.pack(rig, p)?;
        std::hint::black_box(model.infer(&x, &lin)?);
        Ok(())
    })?;
    let ground_truth = TimingReport::from_samples("ground truth", rig.pose_width(), n, 1, &gt, 1);
    let approximation = TimingReport::from_samples("linear + learned", model.input_width(), n, 1, &approx, 1);
    let speedup = ground_truth.median_ms / approximation.median_ms;
    Ok(PipelineComparison { ground_truth, approximation, speedup })
}

/// Self-comparison helper: the same closure timed twice, interleaved so that
/// drift hits both sides alike. Returns (a, b) sample sets.
pub fn time_pair(opts: &BenchOptions, mut a: impl FnMut(usize) -> Result<()>, mut b: impl FnMut(usize) -> Result<()>) -> Result<(Vec<f64>, Vec<f64>)> {
    opts.check()?;
    for i in 0..opts.warmup {
        a(i)?;
        b(i)?;
    }
    let (mut sa, mut sb) = (Vec::with_capacity(opts.reps), Vec::with_capacity(opts.reps));
    for i in 0..opts.reps {
        let t = Instant::now();
        a(opts.warmup + i)?;
        sa.push(t.elapsed().as_secs_f64() * 1e3);
        let t = Instant::now();
        b(opts.warmup + i)?;
        sb.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok((sa, sb))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchComparison {
    pub sequential: TimingReport,
    pub batched: TimingReport,
    /// Batched character throughput over sequential (median-based).
    pub speedup: f64,
    /// Largest coordinate difference between the two paths on the checked frames.
    pub max_abs_diff: f64,
}

fn chunks(c: usize, threads: usize) -> Vec<std::ops::Range<usize>> {
    let t = threads.min(c).max(1);
    (0..t).map(|k| k * c / t..(k + 1) * c / t).collect()
}

fn run_sequential(model: &ModelBundle, frame: &[BenchFrame], threads: usize) -> Result<Vec<Vec<Vec3<f64>>>> {
    let infer_range = |r: std::ops::Range<usize>| r.map(|i| model.infer(&frame[i].inputs, &frame[i].linear)).collect::<Result<Vec<_>>>();
    if threads <= 1 {
        return infer_range(0..frame.len());
    }
    let parts = std::thread::scope(|s| {
        let handles: Vec<_> = chunks(frame.len(), threads).into_iter().map(|r| s.spawn(move || infer_range(r))).collect();
        handles.into_iter().map(|h| h.join().expect("bench worker panicked")).collect::<Vec<_>>()
    });
    Ok(parts.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}

fn run_batched(model: &ModelBundle, inputs: &[Vec<f64>], linear: &[Vec<Vec3<f64>>], threads: usize) -> Result<Vec<Vec<Vec3<f64>>>> {
    if threads <= 1 {
        return model.infer_batch(inputs, linear);
    }
    let parts = std::thread::scope(|s| {
        let handles: Vec<_> = chunks(inputs.len(), threads)
            .into_iter()
            .map(|r| s.spawn(move || model.infer_batch(&inputs[r.clone()], &linear[r])))
            .collect();
        handles.into_iter().map(|h| h.join().expect("bench worker panicked")).collect::<Vec<_>>()
    });
    Ok(parts.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}

/// `characters` characters play `frames` with staggered offsets; each sample
/// deforms all of them once, either by one `infer` per character or by one
/// `infer_batch`. Work is split over `opts.threads` threads by character.
pub fn bench_batch(model: &ModelBundle, frames: &[BenchFrame], characters: usize, opts: &BenchOptions) -> Result<BatchComparison> {
    opts.check()?;
    if characters == 0 || frames.is_empty() {
        return Err(DeformerError::Config("need at least one character and one frame".into()));
    }
    let stride = (frames.len() / characters).max(1);
    let frame_at = |i: usize| -> Vec<BenchFrame> { (0..characters).map(|c| frames[(i + c * stride) % frames.len()].clone()).collect() };
    let samples = opts.warmup + opts.reps;
    let prepared: Vec<Vec<BenchFrame>> = (0..samples.min(frames.len())).map(frame_at).collect();
    let batch_inputs: Vec<(Vec<Vec<f64>>, Vec<Vec<Vec3<f64>>>)> =
        prepared.iter().map(|f| (f.iter().map(|b| b.inputs.clone()).collect(), f.iter().map(|b| b.linear.clone()).collect())).collect();
    let mut max_abs_diff = 0.0f64;
    // Outputs of the first few sequential samples, checked against the batched path.
    const CHECKED: usize = 8;
    let mut seq_out: Vec<Option<Vec<Vec<Vec3<f64>>>>> = vec![None; prepared.len().min(CHECKED)];
    let seq = time_samples(opts, |i| {
        let k = i % prepared.len();
        let out = std::hint::black_box(run_sequential(model, &prepared[k], opts.threads)?);
        if k < CHECKED {
            seq_out[k] = Some(out);
        }
        Ok(())
    })?;
    let bat = time_samples(opts, |i| {
        let k = i % prepared.len();
        let (x, l) = &batch_inputs[k];
        let out = std::hint::black_box(run_batched(model, x, l, opts.threads)?);
        if let Some(Some(s)) = seq_out.get(k) {
            for (a, b) in out.iter().flatten().zip(s.iter().flatten()) {
                for ax in 0..3 {
                    max_abs_diff = max_abs_diff.max((a[ax] - b[ax]).abs());
                }
            }
        }
        Ok(())
    })?;
    let (w, n) = (model.input_width(), model.vertex_count());
    let sequential = TimingReport::from_samples(&format!("sequential x{characters}"), w, n, characters, &seq, opts.threads);
    let batched = TimingReport::from_samples(&format!("batched x{characters}"), w, n, characters, &bat, opts.threads);
    let speedup = sequential.median_ms / batched.median_ms;
    Ok(BatchComparison { sequential, batched, speedup, max_abs_diff })
}

pub const TIMING_HEADER: &str = "label,backend,inputs,vertices,characters,frames,mean_ms,median_ms,p95_ms,fps,threads";

pub fn timing_csv(rows: &[TimingReport]) -> String {
    let mut s = format!("{TIMING_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{:.4},{:.4},{:.4},{:.2},{}",
            r.label, r.backend, r.inputs, r.vertices, r.characters, r.frames, r.mean_ms, r.median_ms, r.p95_ms, r.fps, r.threads
        );
    }
    s
}

/// Markdown table with space-padded columns.
pub fn timing_markdown(rows: &[TimingReport]) -> String {
    let header = ["label", "backend", "inputs", "vertices", "characters", "frames", "mean ms", "median ms", "p95 ms", "fps", "threads"];
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                r.backend.clone(),
                r.inputs.to_string(),
                r.vertices.to_string(),
                r.characters.to_string(),
                r.frames.to_string(),
                format!("{:.3}", r.mean_ms),
                format!("{:.3}", r.median_ms),
                format!("{:.3}", r.p95_ms),
                format!("{:.1}", r.fps),
                r.threads.to_string(),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len()).map(|j| cells.iter().map(|c| c[j].len()).chain([header[j].len()]).max().unwrap()).collect();
    let line = |vals: Vec<String>| {
        let mut s = String::from("|");
        for (v, w) in vals.iter().zip(&widths) {
            let _ = write!(s, " {v:<w$} |");
        }
        s.push('\n');
        s
    };
    let mut out = line(header.iter().map(|h| h.to_string()).collect());
    out.push_str(&line(widths.iter().map(|&w| "-".repeat(w)).collect()));
    for c in cells {
        out.push_str(&line(c));
    }
    out
}

pub fn write_tables(rows: &[TimingReport], csv: &Path, markdown: &Path) -> Result<()> {
    std::fs::write(csv, timing_csv(rows))?;
    std::fs::write(markdown, timing_markdown(rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deformer::LinearBaseline;

    #[test]
    fn single_sample_report() {
        let r = TimingReport::from_samples("x", 2, 3, 1, &[4.0], 1);
        assert_eq!((r.frames, r.mean_ms, r.median_ms, r.p95_ms), (1, 4.0, 4.0, 4.0));
        assert_eq!(r.fps, 250.0);
        let opts = BenchOptions { reps: 1, warmup: 0, threads: 1 };
        let mut calls = 0;
        let s = time_samples(&opts, |_| {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!((s.len(), calls), (1, 1));
    }

    #[test]
    fn report_ordering_invariants() {
        let r = TimingReport::from_samples("x", 1, 1, 1, &[5.0, 1.0, 2.0, 9.0, 3.0], 1);
        assert!(r.p95_ms >= r.median_ms);
        assert_eq!(r.median_ms, 3.0);
    }

    #[test]
    fn warmup_is_discarded_and_zero_reps_rejected() {
        let opts = BenchOptions { reps: 3, warmup: 4, threads: 1 };
        let mut seen = Vec::new();
        let s = time_samples(&opts, |i| {
            seen.push(i);
            Ok(())
        })
        .unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(seen, (0..7).collect::<Vec<_>>());
        assert!(time_samples(&BenchOptions { reps: 0, ..opts }, |_| Ok(())).is_err());
    }

    #[test]
    fn time_inference_runs_the_model() {
        let m = LinearBaseline { inputs: 1, vertices: 2 };
        let frames = vec![BenchFrame { inputs: vec![0.0], linear: vec![[0.0; 3]; 2] }];
        let r = time_inference("linear", &m, &frames, &BenchOptions { reps: 5, warmup: 1, threads: 1 }).unwrap();
        assert_eq!((r.frames, r.inputs, r.vertices), (5, 1, 2));
        let bad = vec![BenchFrame { inputs: vec![0.0, 1.0], linear: vec![[0.0; 3]; 2] }];
        assert!(time_inference("linear", &m, &bad, &BenchOptions::default()).is_err());
    }

    #[test]
    fn tables_have_fixed_columns() {
        let rows = vec![TimingReport::from_samples("a", 2, 240, 1, &[1.0, 2.0], 1), TimingReport::from_samples("batched x64", 2, 240, 64, &[3.0], 2)];
        let csv = timing_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TIMING_HEADER);
        assert!(lines.iter().all(|l| l.split(',').count() == 11));
        let md = timing_markdown(&rows);
        let lens: Vec<usize> = md.lines().map(|l| l.chars().count()).collect();
        assert_eq!(lens.len(), 4);
        assert!(lens.iter().all(|&l| l == lens[0]));
        assert!(md.lines().nth(1).unwrap().starts_with("| ---"));
    }

    #[test]
    fn chunking_covers_everything() {
        assert_eq!(chunks(10, 3), vec![0..3, 3..6, 6..10]);
        assert_eq!(chunks(2, 8), vec![0..1, 1..2]);
    }
}
