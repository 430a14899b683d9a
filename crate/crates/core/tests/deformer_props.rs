use std::sync::OnceLock;

use deformapprox::dataset::{extract_frames, split, DatasetFile, RigInputSpec, SplitSpec};
use deformapprox::deformer::{
    evaluate, train_deformer, train_fdda, Deformer, DeformerConfig, DeformerError, ModelBundle, TrainOptions, ROT6D_LAYOUT,
};
use deformapprox::mesh::Vec3;
use deformapprox::neural::Retention;
use deformapprox::synthrig::{generate_arm_rig, sample_animation, Rig, SampleMode};
use deformapprox::uncertainty::{predict_with_uncertainty, EnsembleBundle};
use proptest::prelude::*;

struct Fixture {
    rig: Rig,
    data: DatasetFile,
    model: ModelBundle,
}

fn small_cfg() -> DeformerConfig {
    DeformerConfig { hidden: vec![16], subspace_hidden: 8, epochs: 60, lr: 1e-2, ..DeformerConfig::default() }
}

fn arm_data(rig: &Rig, frames: usize, spec: &RigInputSpec) -> DatasetFile {
    let seq = sample_animation(rig, frames, SampleMode::Clip, 0).unwrap();
    extract_frames(rig, &seq, spec).unwrap()
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let rig = generate_arm_rig(10, 8).unwrap();
        let data = arm_data(&rig, 40, &RigInputSpec::from_controllers(&rig));
        let sp = split(40, SplitSpec::default()).unwrap();
        let model = train_deformer(&small_cfg(), &data, &sp, &rig.mesh, &TrainOptions::default()).unwrap();
        Fixture { rig, data, model }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn batch_equals_sequential(poses in prop::collection::vec((0.0f64..2.4, -3.1f64..3.1), 1..20)) {
        let f = fixture();
        let inputs: Vec<Vec<f64>> = poses.iter().map(|&(t, p)| vec![t, p]).collect();
        let linear: Vec<Vec<Vec3<f64>>> = inputs.iter().map(|p| f.rig.evaluate_linear(p).unwrap()).collect();
        let batch = f.model.infer_batch(&inputs, &linear).unwrap();
        for ((x, l), b) in inputs.iter().zip(&linear).zip(&batch) {
            let single = f.model.infer(x, l).unwrap();
            for (p, q) in single.iter().zip(b) {
                for k in 0..3 {
                    prop_assert!((p[k] - q[k]).abs() <= 1e-6);
                }
            }
        }
    }
}

#[test]
fn bundle_round_trip_is_lossless() {
    let f = fixture();
    let bytes = f.model.to_bytes();
    let back = ModelBundle::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes(), bytes);
    for fr in &f.data.frames {
        assert_eq!(back.infer(&fr.inputs, &fr.linear_positions).unwrap(), f.model.infer(&fr.inputs, &fr.linear_positions).unwrap());
    }
    assert_eq!(bytes[8], ROT6D_LAYOUT);
    let mut other = bytes.clone();
    other[8] = 2;
    assert!(ModelBundle::from_bytes(&other).is_err());
    assert!(ModelBundle::from_bytes(&bytes[..bytes.len() - 3]).is_err());
}

#[test]
fn anchor_groups_partition_the_anchor_set() {
    let m = &fixture().model;
    let mut all: Vec<usize> = m.groups.iter().flat_map(|g| g.vertices.iter().copied()).collect();
    all.sort_unstable();
    assert_eq!(all, m.factor.anchors());
}

#[test]
fn input_errors_are_reported() {
    let f = fixture();
    let lin = &f.data.frames[0].linear_positions;
    assert!(matches!(f.model.infer(&[0.0], lin), Err(DeformerError::WidthMismatch { .. })));
    assert!(f.model.infer(&[0.0, 0.0], &lin[..3]).is_err());
    assert!(matches!(f.model.infer_batch(&[vec![0.0, 0.0], vec![0.0]], &[lin.clone(), lin.clone()]), Err(DeformerError::RaggedBatch { row: 1, .. })));
}

#[test]
fn more_capacity_fits_better() {
    let f = fixture();
    let sp = split(40, SplitSpec::default()).unwrap();
    let small = DeformerConfig { hidden: vec![2], subspace_hidden: 1, subspaces: Some(1), pca: Retention::Components(1), epochs: 200, lr: 1e-2, ..small_cfg() };
    let large = DeformerConfig { hidden: vec![64, 32], subspace_hidden: 32, subspaces: Some(4), pca: Retention::Components(12), epochs: 200, lr: 1e-2, ..small_cfg() };
    let rmse = |cfg: &DeformerConfig| {
        let m = train_deformer(cfg, &f.data, &sp, &f.rig.mesh, &TrainOptions::default()).unwrap();
        evaluate(&m, &f.data, &sp.train).unwrap().aggregate.rmse
    };
    let (a, b) = (rmse(&small), rmse(&large));
    assert!(b < a, "large {b} vs small {a}");
}

struct Offset(usize);

impl Deformer for Offset {
    fn input_width(&self) -> usize {
        2
    }
    fn vertex_count(&self) -> usize {
        self.0
    }
    fn infer(&self, _: &[f64], linear: &[Vec3<f64>]) -> deformapprox::deformer::Result<Vec<Vec3<f64>>> {
        Ok(linear.iter().map(|p| [p[0], p[1], p[2] + 1.0]).collect())
    }
}

#[test]
fn evaluation_examples() {
    let f = fixture();
    let mut shifted = f.data.clone();
    for fr in &mut shifted.frames {
        fr.final_positions = fr.linear_positions.clone();
    }
    let e = evaluate(&Offset(f.data.vertices), &shifted, &[0, 3, 7]).unwrap();
    assert_eq!(e.rows.iter().map(|r| r.frame).collect::<Vec<_>>(), vec![0, 3, 7]);
    for r in &e.rows {
        assert_eq!((r.rmse, r.mean, r.max, r.p95), (1.0, 1.0, 1.0, 1.0));
    }
    let truthful = f.data.clone();
    let mut exact = truthful.clone();
    for fr in &mut exact.frames {
        fr.linear_positions = fr.final_positions.clone();
    }
    let e = evaluate(&deformapprox::deformer::LinearBaseline { inputs: 2, vertices: f.data.vertices }, &exact, &[1, 2]).unwrap();
    assert_eq!(e.aggregate.max, 0.0);
    for r in &evaluate(&f.model, &truthful, &[0, 1, 2, 3]).unwrap().rows {
        assert!(r.max >= r.p95 && r.p95 >= 0.0 && r.max >= r.mean && r.mean >= 0.0);
    }
}

#[test]
fn fdda_runs_on_bone_inputs() {
    let rig = generate_arm_rig(10, 8).unwrap();
    let spec = RigInputSpec::from_bones(&rig);
    let data = arm_data(&rig, 30, &spec);
    let sp = split(30, SplitSpec::default()).unwrap();
    let cfg = DeformerConfig { inputs: vec!["upper_arm:matrix".into(), "forearm:matrix".into()], ..small_cfg() };
    let m = train_fdda(&cfg, &data, &sp, &rig).unwrap();
    assert_eq!(m.input_width(), 18);
    let e = evaluate(&m, &data, &sp.validation).unwrap();
    assert!(e.aggregate.rmse.is_finite());
    // Scalar inputs carry no bone frames.
    let scalar = arm_data(&rig, 30, &RigInputSpec::from_controllers(&rig));
    assert!(matches!(train_fdda(&small_cfg(), &scalar, &sp, &rig), Err(DeformerError::Config(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn uncertainty_is_non_negative_and_zero_for_clones(theta in 0.0f64..3.0, phi in -4.0f64..4.0) {
        let f = fixture();
        let pose = [theta, phi];
        let lin = f.rig.evaluate_linear(&pose).unwrap();
        let clones = EnsembleBundle::from_members_unchecked(vec![f.model.clone(), f.model.clone(), f.model.clone()]);
        let (mean, u) = predict_with_uncertainty(&clones, &pose, &lin).unwrap();
        prop_assert!(u.iter().all(|&v| v == 0.0));
        prop_assert_eq!(mean, f.model.infer(&pose, &lin).unwrap());

        let mut other = f.model.clone();
        if let Some(d) = other.differential.as_mut() {
            d.net.params_mut()[0] += 0.5;
        }
        other.groups[0].net.net.params_mut()[0] += 0.5;
        let mixed = EnsembleBundle::from_members_unchecked(vec![f.model.clone(), other]);
        let (_, u) = predict_with_uncertainty(&mixed, &pose, &lin).unwrap();
        prop_assert!(u.iter().all(|&v| v >= 0.0 && v.is_finite()));
        let (_, again) = predict_with_uncertainty(&mixed, &pose, &lin).unwrap();
        prop_assert_eq!(u, again);
    }
}
