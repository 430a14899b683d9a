//! Rig files: one JSON document plus the rest mesh as OBJ next to it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Bone, ControllerSpec, Result, Rig, RigError, RigModel};
use crate::mesh::obj;

pub const RIG_FORMAT: &str = "deformapprox-rig v1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigFile {
    format: String,
    name: String,
    /// OBJ path, relative to the rig file's directory.
    mesh: String,
    bones: Vec<Bone>,
    skin_weights: Vec<Vec<f64>>,
    controllers: Vec<ControllerSpec>,
    model: RigModel,
}

/// Writes `json_path` and the OBJ at `obj_path`; the JSON refers to the OBJ
/// by its file name when both live in the same directory.
pub fn save_rig(rig: &Rig, json_path: &Path, obj_path: &Path) -> Result<()> {
    obj::write_obj(&rig.mesh, obj_path)?;
    let mesh_ref = match (json_path.parent(), obj_path.parent(), obj_path.file_name()) {
        (Some(a), Some(b), Some(name)) if a == b => name.to_string_lossy().into_owned(),
        _ => obj_path.to_string_lossy().into_owned(),
    };
    let file = RigFile {
        format: RIG_FORMAT.into(),
        name: rig.name.clone(),
        mesh: mesh_ref,
        bones: rig.bones.clone(),
        skin_weights: rig.skin_weights.clone(),
        controllers: rig.controllers.clone(),
        model: rig.model.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    std::fs::write(json_path, text)?;
    Ok(())
}

pub fn load_rig(json_path: &Path) -> Result<Rig> {
    let file: RigFile = serde_json::from_str(&std::fs::read_to_string(json_path)?)?;
    if file.format != RIG_FORMAT {
        return Err(RigError::Invalid(format!("unsupported rig format `{}`", file.format)));
    }
    let base = json_path.parent().unwrap_or(Path::new("."));
    let mesh = obj::read_obj(&base.join(&file.mesh))?;
    let rig = Rig {
        name: file.name,
        mesh,
        bones: file.bones,
        skin_weights: file.skin_weights,
        controllers: file.controllers,
        model: file.model,
    };
    rig.validate()?;
    Ok(rig)
}
