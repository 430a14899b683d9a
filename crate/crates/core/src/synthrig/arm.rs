//! Twisting, bulging arm: a cylinder along +x with an elbow at `x = elbow_x`.

use serde::{Deserialize, Serialize};

use super::{blend, smoothstep, Bone, ControllerKind, ControllerSpec, Result, Rig, RigError, RigModel};
use crate::mesh::{TriMesh, Vec3};
use crate::rotation::{mat_mul, rot_x, rot_z, BoneTransform};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmParams {
    pub length: f64,
    pub radius: f64,
    pub elbow_x: f64,
    /// Smoothstep band of both the skin weights and the twist falloff.
    pub blend_band: [f64; 2],
    pub bulge_amplitude: f64,
    pub bulge_variance: f64,
}

impl Default for ArmParams {
    fn default() -> Self {
        Self { length: 2.0, radius: 0.2, elbow_x: 1.0, blend_band: [0.8, 1.2], bulge_amplitude: 0.3, bulge_variance: 0.08 }
    }
}

pub const ELBOW_FLEX: &str = "elbow_flex";
pub const WRIST_TWIST: &str = "wrist_twist";

/// `segments` rings of `radial` vertices, no caps: exactly `segments * radial` vertices.
pub fn generate_arm_rig(segments: usize, radial: usize) -> Result<Rig> {
    if segments < 8 || radial < 8 {
        return Err(RigError::BadParameter(format!("arm rig needs segments >= 8 and radial >= 8, got {segments}, {radial}")));
    }
    let p = ArmParams::default();
    let mut positions = Vec::with_capacity(segments * radial);
    for i in 0..segments {
        let x = p.length * i as f64 / (segments - 1) as f64;
        for j in 0..radial {
            let a = std::f64::consts::TAU * j as f64 / radial as f64;
            positions.push([x, p.radius * a.cos(), p.radius * a.sin()]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * (segments - 1) * radial);
    for i in 0..segments - 1 {
        for j in 0..radial {
            let a = i * radial + j;
            let b = i * radial + (j + 1) % radial;
            let c = a + radial;
            let d = b + radial;
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    let mesh = TriMesh::new(positions, triangles)?;
    let skin_weights = mesh
        .positions()
        .iter()
        .map(|q| {
            let w1 = smoothstep(p.blend_band[0], p.blend_band[1], q[0]);
            vec![1.0 - w1, w1]
        })
        .collect();
    let bones = vec![
        Bone { name: "upper_arm".into(), parent: None, rest: BoneTransform::identity() },
        Bone { name: "forearm".into(), parent: Some(0), rest: BoneTransform { rotation: crate::rotation::identity(), translation: [p.elbow_x, 0.0, 0.0] } },
    ];
    let controllers = vec![
        ControllerSpec { name: ELBOW_FLEX.into(), kind: ControllerKind::Scalar, range: vec![[0.0, 2.4]], neutral: vec![0.0] },
        ControllerSpec {
            name: WRIST_TWIST.into(),
            kind: ControllerKind::Scalar,
            range: vec![[-std::f64::consts::PI, std::f64::consts::PI]],
            neutral: vec![0.0],
        },
    ];
    let rig = Rig { name: "arm".into(), mesh, bones, skin_weights, controllers, model: RigModel::Arm(p) };
    rig.validate()?;
    Ok(rig)
}

fn controls(rig: &Rig, pose: &[f64]) -> Result<(f64, f64)> {
    Ok((rig.scalar(pose, ELBOW_FLEX)?, rig.scalar(pose, WRIST_TWIST)?))
}

/// Posed world frames. With `with_twist == false` the forearm only flexes,
/// which is the skeleton the ground-truth model skins with after baking the
/// twist into the rest shape.
pub(super) fn bone_world(rig: &Rig, p: &ArmParams, pose: &[f64], with_twist: bool) -> Result<Vec<BoneTransform<f64>>> {
    let (theta, phi) = controls(rig, pose)?;
    let rot = if with_twist { mat_mul(&rot_z(theta), &rot_x(phi)) } else { rot_z(theta) };
    Ok(vec![rig.bones[0].rest, BoneTransform { rotation: rot, translation: [p.elbow_x, 0.0, 0.0] }])
}

fn skinning(rig: &Rig, world: &[BoneTransform<f64>]) -> Vec<BoneTransform<f64>> {
    world.iter().zip(&rig.bones).map(|(w, b)| w.compose(&b.rest.inverse())).collect()
}

pub(super) fn evaluate_linear(rig: &Rig, p: &ArmParams, pose: &[f64]) -> Result<Vec<Vec3<f64>>> {
    let world = bone_world(rig, p, pose, true)?;
    Ok(blend(&rig.skin_weights, &skinning(rig, &world), rig.mesh.positions()))
}

/// Rest-pose correctives: twist about the forearm axis by `phi * s(x)`, then
/// radial bulge `1 + A sin(theta / 2) exp(-(x - elbow)² / var)`.
pub fn arm_corrected_rest(p: &ArmParams, q: &Vec3<f64>, theta: f64, phi: f64) -> Vec3<f64> {
    let s = smoothstep(p.blend_band[0], p.blend_band[1], q[0]);
    let (sn, cs) = (phi * s).sin_cos();
    let y = cs * q[1] - sn * q[2];
    let z = sn * q[1] + cs * q[2];
    let dx = q[0] - p.elbow_x;
    let scale = 1.0 + p.bulge_amplitude * (theta / 2.0).sin() * (-(dx * dx) / p.bulge_variance).exp();
    [q[0], scale * y, scale * z]
}

pub(super) fn evaluate_ground_truth(rig: &Rig, p: &ArmParams, pose: &[f64]) -> Result<Vec<Vec3<f64>>> {
    let (theta, phi) = controls(rig, pose)?;
    let rest: Vec<Vec3<f64>> = rig.mesh.positions().iter().map(|q| arm_corrected_rest(p, q, theta, phi)).collect();
    let world = bone_world(rig, p, pose, false)?;
    Ok(blend(&rig.skin_weights, &skinning(rig, &world), &rest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn grid_size_and_weights() {
        let rig = generate_arm_rig(20, 12).unwrap();
        assert_eq!(rig.mesh.vertex_count(), 240);
        for w in &rig.skin_weights {
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        assert!(generate_arm_rig(7, 12).is_err());
        assert!(generate_arm_rig(8, 7).is_err());
        assert!(rig.mesh.first_unreachable_vertex().is_none());
    }

    #[test]
    fn neutral_pose_is_rest() {
        let rig = generate_arm_rig(20, 12).unwrap();
        let n = rig.neutral_pose();
        assert_eq!(rig.evaluate_linear(&n).unwrap(), rig.mesh.positions());
        assert_eq!(rig.evaluate_ground_truth(&n).unwrap(), rig.mesh.positions());
    }

    #[test]
    fn flex_by_hand() {
        let mut rig = generate_arm_rig(20, 12).unwrap();
        // Force a single vertex to sit at (2,0,0) fully on the forearm.
        let mut pos = rig.mesh.positions().to_vec();
        pos[0] = [2.0, 0.0, 0.0];
        rig.mesh = rig.mesh.with_positions(pos).unwrap();
        rig.skin_weights[0] = vec![0.0, 1.0];
        let out = rig.evaluate_linear(&[FRAC_PI_2, 0.0]).unwrap();
        assert!((out[0][0] - 1.0).abs() < 1e-12 && (out[0][1] - 1.0).abs() < 1e-12 && out[0][2].abs() < 1e-12);
    }

    #[test]
    fn candy_wrapper_at_half_weight() {
        // LBS of the identity and a half turn about x at equal weights maps
        // (x, y, z) to (x, 0, 0): the ring collapses onto the axis.
        let mut rig = generate_arm_rig(20, 12).unwrap();
        let mut pos = rig.mesh.positions().to_vec();
        pos[5] = [1.0, 0.2, 0.0];
        rig.mesh = rig.mesh.with_positions(pos).unwrap();
        rig.skin_weights[5] = vec![0.5, 0.5];
        let out = rig.evaluate_linear(&[0.0, PI]).unwrap();
        let r = (out[5][1].powi(2) + out[5][2].powi(2)).sqrt();
        assert!(r < 1e-12);
        let truth = rig.evaluate_ground_truth(&[0.0, PI]).unwrap();
        let rt = (truth[5][1].powi(2) + truth[5][2].powi(2)).sqrt();
        assert!((rt - 0.2).abs() < 1e-12);
    }

    #[test]
    fn bulge_at_elbow() {
        let p = ArmParams::default();
        let q = arm_corrected_rest(&p, &[1.0, 0.0, 0.2], 2.0, 0.0);
        let expect = 0.2 * (1.0 + 0.3 * 1.0f64.sin());
        assert!((q[2] - expect).abs() < 1e-15 && q[1].abs() < 1e-15);
    }

    #[test]
    fn twist_residual_confined_to_blend_band() {
        let rig = generate_arm_rig(20, 12).unwrap();
        let pose = [0.0, PI];
        let lin = rig.evaluate_linear(&pose).unwrap();
        let truth = rig.evaluate_ground_truth(&pose).unwrap();
        for (v, q) in rig.mesh.positions().iter().enumerate() {
            let s = smoothstep(0.8, 1.2, q[0]);
            let d: f64 = (0..3).map(|a| (truth[v][a] - lin[v][a]).powi(2)).sum::<f64>().sqrt();
            if s > 0.0 && s < 1.0 {
                assert!(d > 1e-6, "vertex {v} s={s} residual {d}");
            } else {
                assert!(d < 1e-12, "vertex {v} s={s} residual {d}");
            }
        }
    }
}
