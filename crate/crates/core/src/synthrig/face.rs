//! Planar "face" driven only by scalar controllers `c_k ∈ [0, 1]`:
//! `z = Σ_k c_k G_k(u, v) + Σ_{k<j} 0.5 c_k c_j H_kj(u, v)`.
//!
//! The linear baseline keeps only the first-order blendshape term, so the
//! residual is the pairwise product term.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Bone, ControllerKind, ControllerSpec, Result, Rig, RigError, RigModel};
use crate::mesh::{TriMesh, Vec3};
use crate::rotation::BoneTransform;

pub const FACE_SEED: u64 = 0x0FACE_5EED;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub center: [f64; 2],
    pub sigma: f64,
    pub amplitude: f64,
}

impl Gaussian {
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let du = u - self.center[0];
        let dv = v - self.center[1];
        self.amplitude * (-(du * du + dv * dv) / (2.0 * self.sigma * self.sigma)).exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceParams {
    /// One first-order bump per controller.
    pub bumps: Vec<Gaussian>,
    /// `(k, j, H_kj)` for every `k < j`.
    pub pair_bumps: Vec<(usize, usize, Gaussian)>,
    pub pair_coefficient: f64,
}

pub fn generate_face_rig(grid: usize, bumps: usize) -> Result<Rig> {
    generate_face_rig_seeded(grid, bumps, FACE_SEED)
}

pub fn generate_face_rig_seeded(grid: usize, bumps: usize, seed: u64) -> Result<Rig> {
    if grid < 16 || !(2..=16).contains(&bumps) {
        return Err(RigError::BadParameter(format!("face rig needs grid >= 16 and bumps in [2, 16], got {grid}, {bumps}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian = |rng: &mut ChaCha8Rng| Gaussian {
        center: [rng.gen_range(0.15..0.85), rng.gen_range(0.15..0.85)],
        sigma: rng.gen_range(0.08..0.16),
        amplitude: rng.gen_range(0.05..0.12) * if rng.gen::<bool>() { 1.0 } else { -1.0 },
    };
    let first: Vec<Gaussian> = (0..bumps).map(|_| gaussian(&mut rng)).collect();
    let mut pair_bumps = Vec::new();
    for k in 0..bumps {
        for j in k + 1..bumps {
            pair_bumps.push((k, j, gaussian(&mut rng)));
        }
    }

    let mut positions = Vec::with_capacity(grid * grid);
    for i in 0..grid {
        for j in 0..grid {
            positions.push([j as f64 / (grid - 1) as f64, i as f64 / (grid - 1) as f64, 0.0]);
        }
    }
    let mut triangles = Vec::new();
    for i in 0..grid - 1 {
        for j in 0..grid - 1 {
            let a = i * grid + j;
            let b = a + 1;
            let c = a + grid;
            let d = c + 1;
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    let mesh = TriMesh::new(positions, triangles)?;
    let controllers = (0..bumps)
        .map(|k| ControllerSpec { name: format!("c{k}"), kind: ControllerKind::Scalar, range: vec![[0.0, 1.0]], neutral: vec![0.0] })
        .collect();
    let rig = Rig {
        name: "face".into(),
        skin_weights: vec![vec![1.0]; mesh.vertex_count()],
        mesh,
        bones: vec![Bone { name: "head".into(), parent: None, rest: BoneTransform::identity() }],
        controllers,
        model: RigModel::Face(FaceParams { bumps: first, pair_bumps, pair_coefficient: 0.5 }),
    };
    rig.validate()?;
    Ok(rig)
}

pub(super) fn evaluate(rig: &Rig, p: &FaceParams, pose: &[f64], nonlinear: bool) -> Result<Vec<Vec3<f64>>> {
    if p.bumps.len() != pose.len() {
        return Err(RigError::Invalid(format!("face model has {} bumps for {} controllers", p.bumps.len(), pose.len())));
    }
    Ok(rig
        .mesh
        .positions()
        .iter()
        .map(|q| {
            let (u, v) = (q[0], q[1]);
            let mut z = q[2];
            for (g, &c) in p.bumps.iter().zip(pose) {
                if c != 0.0 {
                    z += c * g.eval(u, v);
                }
            }
            if nonlinear {
                for (k, j, h) in &p.pair_bumps {
                    let w = pose[*k] * pose[*j];
                    if w != 0.0 {
                        z += p.pair_coefficient * w * h.eval(u, v);
                    }
                }
            }
            [q[0], q[1], z]
        })
        .collect())
}
