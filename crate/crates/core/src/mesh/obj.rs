//! ASCII OBJ reading and writing, restricted to `v` and `f` records.
//!
//! Faces are written 1-based as `f a b c`. On read, polygon faces are fan
//! triangulated and `v/vt/vn` index groups keep only the position index.

use std::fmt::Write as _;
use std::path::Path;

use super::{MeshError, Result, TriMesh};

pub fn to_obj_string(mesh: &TriMesh<f64>) -> String {
    let mut s = String::new();
    for p in mesh.positions() {
        writeln!(s, "v {} {} {}", p[0], p[1], p[2]).unwrap();
    }
    for t in mesh.triangles() {
        writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    s
}

pub fn write_obj(mesh: &TriMesh<f64>, path: &Path) -> Result<()> {
    std::fs::write(path, to_obj_string(mesh))?;
    Ok(())
}

pub fn parse_obj(text: &str) -> Result<TriMesh<f64>> {
    let mut positions = Vec::new();
    let mut faces: Vec<(usize, Vec<i64>)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut p = [0.0f64; 3];
                for c in &mut p {
                    let tok = it.next().ok_or_else(|| parse_err(line_no, "vertex needs 3 coordinates"))?;
                    *c = tok.parse().map_err(|_| parse_err(line_no, &format!("bad coordinate `{tok}`")))?;
                }
                positions.push(p);
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    let head = tok.split('/').next().unwrap_or("");
                    let v: i64 = head.parse().map_err(|_| parse_err(line_no, &format!("bad face index `{tok}`")))?;
                    idx.push(v);
                }
                if idx.len() < 3 {
                    return Err(parse_err(line_no, "face needs at least 3 vertices"));
                }
                faces.push((line_no, idx));
            }
            _ => {}
        }
    }
    let n = positions.len() as i64;
    let mut triangles = Vec::new();
    for (line_no, idx) in faces {
        let resolved: Vec<usize> = idx
            .iter()
            .map(|&v| {
                let i = if v < 0 { n + v } else { v - 1 };
                if i < 0 || i >= n {
                    Err(parse_err(line_no, &format!("face index {v} out of range")))
                } else {
                    Ok(i as usize)
                }
            })
            .collect::<Result<_>>()?;
        for k in 1..resolved.len() - 1 {
            triangles.push([resolved[0], resolved[k], resolved[k + 1]]);
        }
    }
    TriMesh::new(positions, triangles)
}

pub fn read_obj(path: &Path) -> Result<TriMesh<f64>> {
    parse_obj(&std::fs::read_to_string(path)?)
}

fn parse_err(line: usize, message: &str) -> MeshError {
    MeshError::ObjParse { line, message: message.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let m = TriMesh::new(
            vec![[0.1, -2.5e-7, 3.0], [1.0 / 3.0, 0.0, 1e20], [0.0, 1.0, -0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let back = parse_obj(&to_obj_string(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn quads_and_slashes() {
        let m = parse_obj("# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n").unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2], [0, 2, 3]]);
        assert!(parse_obj("v 0 0\n").is_err());
        assert!(parse_obj("v 0 0 0\nf 1 2 3\n").is_err());
    }
}
