//! Procedural ground-truth rigs.
//!
//! Each rig has a linear blend skinning baseline and a deterministic nonlinear
//! "final" deformation on top of it. Every constant is fixed in code, so all
//! downstream numbers are reproducible.

mod arm;
mod face;
pub mod io;
mod sample;

pub use arm::{arm_corrected_rest, generate_arm_rig, ArmParams};
pub use face::{generate_face_rig, generate_face_rig_seeded, FaceParams, Gaussian, FACE_SEED};
pub use sample::{out_of_range_poses, sample_animation, ControlSequence, SampleMode};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{MeshError, TriMesh, Vec3};
use crate::rotation::BoneTransform;

#[derive(Debug, Error)]
pub enum RigError {
    #[error("invalid rig parameter: {0}")]
    BadParameter(String),
    #[error("missing value for controller `{0}`")]
    MissingController(String),
    #[error("pose has {got} values, rig expects {expected}")]
    PoseWidth { expected: usize, got: usize },
    #[error("invalid rig: {0}")]
    Invalid(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("rig JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = RigError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Scalar,
    Matrix,
}

impl ControllerKind {
    /// Packed width: 1 for scalars, 9 (6D rotation + translation) for matrices.
    pub fn width(self) -> usize {
        match self {
            Self::Scalar => 1,
            Self::Matrix => 9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub name: String,
    pub kind: ControllerKind,
    /// `[min, max]` per scalar dimension.
    pub range: Vec<[f64; 2]>,
    /// Rest value per scalar dimension; all correctives vanish here.
    pub neutral: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bone {
    pub name: String,
    pub parent: Option<usize>,
    pub rest: BoneTransform<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RigModel {
    Arm(ArmParams),
    Face(FaceParams),
}

/// Flat controller values in controller order.
pub type Pose = Vec<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct Rig {
    pub name: String,
    pub mesh: TriMesh<f64>,
    pub bones: Vec<Bone>,
    /// `vertex_count × bones`, rows sum to one.
    pub skin_weights: Vec<Vec<f64>>,
    pub controllers: Vec<ControllerSpec>,
    pub model: RigModel,
}

pub fn smoothstep(lo: f64, hi: f64, x: f64) -> f64 {
    let t = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

impl Rig {
    pub fn validate(&self) -> Result<()> {
        let n = self.mesh.vertex_count();
        if self.skin_weights.len() != n {
            return Err(RigError::Invalid(format!("{} weight rows for {n} vertices", self.skin_weights.len())));
        }
        for (v, row) in self.skin_weights.iter().enumerate() {
            if row.len() != self.bones.len() {
                return Err(RigError::Invalid(format!("vertex {v} has {} weights for {} bones", row.len(), self.bones.len())));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(RigError::Invalid(format!("vertex {v} weights must be non-negative and sum to 1 (sum {sum})")));
            }
        }
        for (b, bone) in self.bones.iter().enumerate() {
            if bone.parent.is_some_and(|p| p >= b) {
                return Err(RigError::Invalid(format!("bone {b} parent must precede it")));
            }
        }
        let mut names: Vec<&str> = self.controllers.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(RigError::Invalid("controller names must be unique".into()));
        }
        for c in &self.controllers {
            if c.range.len() != c.kind.width() || c.neutral.len() != c.kind.width() {
                return Err(RigError::Invalid(format!("controller `{}` has wrong dimension count", c.name)));
            }
            if c.range.iter().any(|r| !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1])) {
                return Err(RigError::Invalid(format!("controller `{}` needs finite min < max", c.name)));
            }
        }
        Ok(())
    }

    pub fn pose_width(&self) -> usize {
        self.controllers.iter().map(|c| c.kind.width()).sum()
    }

    pub fn controller_index(&self, name: &str) -> Option<usize> {
        self.controllers.iter().position(|c| c.name == name)
    }

    /// Offset of controller `idx` within a flat pose.
    pub fn controller_offset(&self, idx: usize) -> usize {
        self.controllers[..idx].iter().map(|c| c.kind.width()).sum()
    }

    pub fn bone_index(&self, name: &str) -> Option<usize> {
        self.bones.iter().position(|b| b.name == name)
    }

    pub fn neutral_pose(&self) -> Pose {
        self.controllers.iter().flat_map(|c| c.neutral.iter().copied()).collect()
    }

    /// Value of scalar controller `name`.
    pub fn scalar(&self, pose: &[f64], name: &str) -> Result<f64> {
        self.check_pose(pose)?;
        let idx = self.controller_index(name).ok_or_else(|| RigError::MissingController(name.to_string()))?;
        Ok(pose[self.controller_offset(idx)])
    }

    fn check_pose(&self, pose: &[f64]) -> Result<()> {
        let expected = self.pose_width();
        if pose.len() < expected {
            let mut seen = 0;
            for c in &self.controllers {
                seen += c.kind.width();
                if seen > pose.len() {
                    return Err(RigError::MissingController(c.name.clone()));
                }
            }
        }
        if pose.len() != expected {
            return Err(RigError::PoseWidth { expected, got: pose.len() });
        }
        Ok(())
    }

    /// Posed world transform of every bone's frame.
    pub fn bone_transforms(&self, pose: &[f64]) -> Result<Vec<BoneTransform<f64>>> {
        self.check_pose(pose)?;
        match &self.model {
            RigModel::Arm(p) => arm::bone_world(self, p, pose, true),
            RigModel::Face(_) => Ok(self.bones.iter().map(|b| b.rest).collect()),
        }
    }

    /// Linear blend skinning of the rest mesh.
    pub fn evaluate_linear(&self, pose: &[f64]) -> Result<Vec<Vec3<f64>>> {
        self.check_pose(pose)?;
        match &self.model {
            RigModel::Arm(p) => arm::evaluate_linear(self, p, pose),
            RigModel::Face(p) => face::evaluate(self, p, pose, false),
        }
    }

    /// Linear baseline plus the nonlinear correctives.
    pub fn evaluate_ground_truth(&self, pose: &[f64]) -> Result<Vec<Vec3<f64>>> {
        self.check_pose(pose)?;
        match &self.model {
            RigModel::Arm(p) => arm::evaluate_ground_truth(self, p, pose),
            RigModel::Face(p) => face::evaluate(self, p, pose, true),
        }
    }
}

/// `Σ_b w_b T_b x` for every rest vertex, given per-bone skinning transforms
/// (posed world transform times inverse rest). Accumulated as offsets from `x`
/// so identity transforms return `x` exactly.
pub(crate) fn blend(weights: &[Vec<f64>], skinning: &[BoneTransform<f64>], points: &[Vec3<f64>]) -> Vec<Vec3<f64>> {
    points
        .iter()
        .zip(weights)
        .map(|(p, w)| {
            let mut offset = [0.0; 3];
            for (b, &wb) in w.iter().enumerate() {
                if wb == 0.0 {
                    continue;
                }
                let q = skinning[b].apply(p);
                for a in 0..3 {
                    offset[a] += wb * (q[a] - p[a]);
                }
            }
            [p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothstep_band() {
        assert_eq!(smoothstep(0.8, 1.2, 0.5), 0.0);
        assert_eq!(smoothstep(0.8, 1.2, 1.5), 1.0);
        assert!((smoothstep(0.8, 1.2, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pose_validation() {
        let rig = generate_arm_rig(8, 8).unwrap();
        assert!(matches!(rig.evaluate_linear(&[0.0]), Err(RigError::MissingController(n)) if n == "wrist_twist"));
        assert!(matches!(rig.evaluate_linear(&[0.0; 3]), Err(RigError::PoseWidth { .. })));
        let mut bad = rig.clone();
        bad.skin_weights[0][0] = 0.7;
        assert!(bad.validate().is_err());
        let mut bad = rig;
        bad.controllers[0].range[0] = [1.0, 1.0];
        assert!(bad.validate().is_err());
    }
}
