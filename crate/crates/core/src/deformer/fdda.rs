//! Per-bone baseline: each vertex belongs to its most influential bone, and
//! that bone's network predicts the vertex residuals in the bone's frame from
//! the 6D-encoded local rotations of the bone and its ancestors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bundle::OutputScaling;
use super::{Deformer, DeformerConfig, DeformerError, Result};
use crate::dataset::{fit_rows, DatasetFile, NormalizationStats, RigInputSpec, Split};
use crate::linalg::Matrix;
use crate::mesh::Vec3;
use crate::neural::{train, Mlp, TrainState, TrainTask};
use crate::rotation::{decode_transform, encode_6d, mat_mul, mat_vec, transpose, Mat3};
use crate::synthrig::{ControllerKind, Rig};

/// Index of the largest weight per vertex; ties go to the lower bone index.
pub fn dominant_bones(weights: &[Vec<f64>]) -> Vec<usize> {
    weights
        .iter()
        .map(|w| {
            let mut best = 0;
            for (b, &x) in w.iter().enumerate() {
                if x > w[best] {
                    best = b;
                }
            }
            best
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct FddaBone {
    pub bone: usize,
    /// The bone followed by its ancestors; their local rotations are the inputs.
    pub chain: Vec<usize>,
    pub vertices: Vec<usize>,
    pub stats: NormalizationStats,
    pub scaling: OutputScaling,
    pub net: TrainState<f32>,
}

#[derive(Clone, Debug)]
pub struct FddaModel {
    pub spec: RigInputSpec,
    pub vertices: usize,
    pub parents: Vec<Option<usize>>,
    /// Input column of each bone's packed world transform.
    pub bone_offsets: Vec<usize>,
    pub rest_rotations: Vec<Mat3<f64>>,
    pub assignment: Vec<usize>,
    pub bones: Vec<FddaBone>,
}

fn chain(parents: &[Option<usize>], bone: usize) -> Vec<usize> {
    let mut out = vec![bone];
    let mut b = bone;
    while let Some(p) = parents[b] {
        out.push(p);
        b = p;
    }
    out
}

impl FddaModel {
    fn world_rotations(&self, inputs: &[f64]) -> Result<Vec<Mat3<f64>>> {
        self.bone_offsets.iter().map(|&o| Ok(decode_transform(&inputs[o..o + 9])?.rotation)).collect()
    }

    /// `R_b(pose) R_b(rest)ᵀ`: maps rest-frame offsets to posed world offsets.
    fn skinning_rotation(&self, world: &[Mat3<f64>], b: usize) -> Mat3<f64> {
        mat_mul(&world[b], &transpose(&self.rest_rotations[b]))
    }

    fn features(&self, world: &[Mat3<f64>], chain: &[usize]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(6 * chain.len());
        for &b in chain {
            let local = match self.parents[b] {
                Some(p) => mat_mul(&transpose(&world[p]), &world[b]),
                None => world[b],
            };
            out.extend_from_slice(&encode_6d(&local)?.0);
        }
        Ok(out)
    }
}

/// Trains one network per bone. `data` must carry every bone of `rig` as a
/// matrix input (its posed world transform).
pub fn train_fdda(cfg: &DeformerConfig, data: &DatasetFile, split: &Split, rig: &Rig) -> Result<FddaModel> {
    cfg.validate()?;
    let n = rig.mesh.vertex_count();
    if data.vertices != n {
        return Err(DeformerError::WidthMismatch { expected: n, got: data.vertices });
    }
    let offsets = data.spec.offsets();
    let bone_offsets = rig
        .bones
        .iter()
        .map(|bone| {
            data.spec
                .entries
                .iter()
                .position(|(name, kind)| name == &bone.name && *kind == ControllerKind::Matrix)
                .map(|i| offsets[i])
                .ok_or_else(|| DeformerError::Config(format!("dataset has no matrix input for bone `{}`", bone.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    let parents: Vec<Option<usize>> = rig.bones.iter().map(|b| b.parent).collect();
    let assignment = dominant_bones(&rig.skin_weights);
    let mut model = FddaModel {
        spec: data.spec.clone(),
        vertices: n,
        parents,
        bone_offsets,
        rest_rotations: rig.bones.iter().map(|b| b.rest.rotation).collect(),
        assignment: assignment.clone(),
        bones: Vec::new(),
    };

    let worlds: Vec<Vec<Mat3<f64>>> = data.frames.iter().map(|f| model.world_rotations(&f.inputs)).collect::<Result<_>>()?;
    let residuals: Vec<Vec<Vec3<f64>>> = data.frames.iter().map(|f| f.residual()).collect();
    let mut tasks = Vec::new();
    let mut parts = Vec::new();
    for b in 0..rig.bones.len() {
        let vertices: Vec<usize> = (0..n).filter(|&v| assignment[v] == b).collect();
        if vertices.is_empty() {
            log::info!("bone `{}` owns no vertices; skipped", rig.bones[b].name);
            continue;
        }
        let ch = chain(&model.parents, b);
        let feats: Vec<Vec<f64>> = worlds.iter().map(|w| model.features(w, &ch)).collect::<Result<_>>()?;
        let targets: Vec<Vec<f64>> = worlds
            .iter()
            .zip(&residuals)
            .map(|(w, r)| {
                let inv = transpose(&model.skinning_rotation(w, b));
                vertices.iter().flat_map(|&v| mat_vec(&inv, &r[v])).collect()
            })
            .collect();
        let train_rows: Vec<&[f64]> = split.train.iter().map(|&i| feats[i].as_slice()).collect();
        let stats = fit_rows(&train_rows, 6 * ch.len());
        let to_x = |idx: &[usize]| {
            let mut m = Matrix::zeros(idx.len(), stats.width());
            for (r, &i) in idx.iter().enumerate() {
                for (j, v) in stats.normalize(&feats[i]).into_iter().enumerate() {
                    m[(r, j)] = v as f32;
                }
            }
            m
        };
        let pick = |idx: &[usize]| idx.iter().map(|&i| targets[i].clone()).collect::<Vec<_>>();
        let (scaling, constant) = OutputScaling::fit(&pick(&split.train));
        let mut widths = vec![6 * ch.len()];
        widths.extend(&cfg.hidden);
        widths.push(3 * vertices.len());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(b as u64);
        let mut net = Mlp::xavier(&widths, &mut rng)?;
        if constant {
            net.zero_output_layer();
        }
        tasks.push(TrainTask {
            state: TrainState::from_net(net, rng),
            x: to_x(&split.train),
            y: scaling.targets(&pick(&split.train), constant),
            validation: Some((to_x(&split.validation), scaling.targets(&pick(&split.validation), constant))),
        });
        parts.push((b, ch, vertices, stats, scaling));
    }
    train(&mut tasks, &cfg.train_config(), None)?;
    model.bones = parts
        .into_iter()
        .zip(tasks)
        .map(|((bone, chain, vertices, stats, scaling), t)| FddaBone { bone, chain, vertices, stats, scaling, net: t.state })
        .collect();
    Ok(model)
}

impl Deformer for FddaModel {
    fn input_width(&self) -> usize {
        self.spec.width()
    }

    fn vertex_count(&self) -> usize {
        self.vertices
    }

    fn infer(&self, inputs: &[f64], linear: &[Vec3<f64>]) -> Result<Vec<Vec3<f64>>> {
        if inputs.len() != self.spec.width() {
            return Err(DeformerError::WidthMismatch { expected: self.spec.width(), got: inputs.len() });
        }
        if linear.len() != self.vertices {
            return Err(DeformerError::WidthMismatch { expected: self.vertices, got: linear.len() });
        }
        let world = self.world_rotations(inputs)?;
        let mut out = linear.to_vec();
        for fb in &self.bones {
            let x: Vec<f32> = fb.stats.normalize(&self.features(&world, &fb.chain)?).into_iter().map(|v| v as f32).collect();
            let y = fb.net.net.forward_row(&x)?;
            let rot = self.skinning_rotation(&world, fb.bone);
            for (i, &v) in fb.vertices.iter().enumerate() {
                let local = [0, 1, 2].map(|a| fb.scaling.apply(3 * i + a, y[3 * i + a]));
                let r = mat_vec(&rot, &local);
                for a in 0..3 {
                    out[v][a] += r[a];
                }
            }
        }
        if out.iter().flatten().any(|v| !v.is_finite()) {
            return Err(DeformerError::NonFiniteOutput);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{extract_frames, split, SplitSpec};
    use crate::synthrig::{generate_arm_rig, sample_animation, SampleMode};

    #[test]
    fn tie_goes_to_lower_bone() {
        assert_eq!(dominant_bones(&[vec![0.5, 0.5], vec![0.2, 0.8], vec![1.0, 0.0], vec![0.3, 0.3, 0.4]]), vec![0, 1, 0, 2]);
    }

    #[test]
    fn rigid_dataset_learns_zero() {
        let rig = generate_arm_rig(12, 8).unwrap();
        let seq = sample_animation(&rig, 20, SampleMode::Clip, 0).unwrap();
        let mut data = extract_frames(&rig, &seq, &RigInputSpec::from_bones(&rig)).unwrap();
        for f in &mut data.frames {
            f.final_positions = f.linear_positions.clone();
        }
        let sp = split(20, SplitSpec::default()).unwrap();
        let cfg = DeformerConfig { hidden: vec![8], epochs: 5, ..DeformerConfig::default() };
        let m = train_fdda(&cfg, &data, &sp, &rig).unwrap();
        assert_eq!(m.bones.len(), 2);
        for f in &data.frames {
            assert_eq!(m.infer(&f.inputs, &f.linear_positions).unwrap(), f.linear_positions);
        }
        let missing = extract_frames(&rig, &seq, &RigInputSpec::from_controllers(&rig)).unwrap();
        assert!(matches!(train_fdda(&cfg, &missing, &sp, &rig), Err(DeformerError::Config(_))));
    }
}
