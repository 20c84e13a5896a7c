//! Wavefront OBJ subset: `v`, `vt` and polygonal `f` records.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{TriangleMesh, Uv};
use crate::math::Vec3;

fn parse_index(tok: &str, count: usize, line: usize, path: &Path) -> Result<usize> {
    let i: i64 = tok.parse().map_err(|_| Error::format(path, format!("line {line}: bad index `{tok}`")))?;
    let resolved = if i < 0 { count as i64 + i } else { i - 1 };
    if resolved < 0 || resolved as usize >= count {
        return Err(Error::format(path, format!("line {line}: index {i} out of range ({count} entries)")));
    }
    Ok(resolved as usize)
}

fn parse_floats<const N: usize>(it: &mut std::str::SplitWhitespace<'_>, line: usize, path: &Path) -> Result<[f64; N]> {
    let mut out = [0.0; N];
    for v in out.iter_mut() {
        let tok = it.next().ok_or_else(|| Error::format(path, format!("line {line}: too few coordinates")))?;
        *v = tok.parse().map_err(|_| Error::format(path, format!("line {line}: bad number `{tok}`")))?;
    }
    Ok(out)
}

/// Parse OBJ text. Polygons are fan-triangulated; corners without a texture
/// index get UV (0, 0).
pub fn parse_obj(text: &str, path: &Path) -> Result<TriangleMesh> {
    let mut positions = Vec::new();
    let mut tex: Vec<Uv> = Vec::new();
    let mut faces = Vec::new();
    let mut uvs = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let mut it = raw.split_whitespace();
        match it.next() {
            Some("v") => {
                let [x, y, z] = parse_floats::<3>(&mut it, line, path)?;
                positions.push(Vec3::new(x, y, z));
            }
            Some("vt") => {
                let [u, v] = parse_floats::<2>(&mut it, line, path)?;
                tex.push([u, v]);
            }
            Some("f") => {
                let mut corners = Vec::new();
                for tok in it {
                    let mut parts = tok.split('/');
                    let vi = parse_index(parts.next().unwrap_or(""), positions.len(), line, path)?;
                    let ti = match parts.next() {
                        Some(t) if !t.is_empty() => Some(parse_index(t, tex.len(), line, path)?),
                        _ => None,
                    };
                    corners.push((vi as u32, ti.map_or([0.0, 0.0], |t| tex[t])));
                }
                if corners.len() < 3 {
                    return Err(Error::format(path, format!("line {line}: face with fewer than 3 vertices")));
                }
                for k in 1..corners.len() - 1 {
                    faces.push([corners[0].0, corners[k].0, corners[k + 1].0]);
                    uvs.push([corners[0].1, corners[k].1, corners[k + 1].1]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(positions, faces, uvs).map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_obj(path: &Path) -> Result<TriangleMesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

/// Shortest round-trip formatting, so a write/read cycle is lossless.
pub fn format_obj(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for p in mesh.positions() {
        let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
    }
    let mut tex_index: HashMap<[u64; 2], usize> = HashMap::new();
    let mut corner_tex = Vec::with_capacity(mesh.face_count() * 3);
    for face_uv in mesh.uvs() {
        for uv in face_uv {
            let key = [uv[0].to_bits(), uv[1].to_bits()];
            let next = tex_index.len();
            let idx = *tex_index.entry(key).or_insert_with(|| {
                let _ = writeln!(s, "vt {} {}", uv[0], uv[1]);
                next
            });
            corner_tex.push(idx);
        }
    }
    for (f, face) in mesh.faces().iter().enumerate() {
        let _ = writeln!(
            s,
            "f {}/{} {}/{} {}/{}",
            face[0] + 1,
            corner_tex[3 * f] + 1,
            face[1] + 1,
            corner_tex[3 * f + 1] + 1,
            face[2] + 1,
            corner_tex[3 * f + 2] + 1
        );
    }
    s
}

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    super::write_bytes(path, format_obj(mesh).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quads_are_fan_triangulated() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nf 1/1 2/2 3/3 4/4\n";
        let m = parse_obj(text, Path::new("q.obj")).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
        assert_eq!(m.uvs()[1][2], [0.0, 1.0]);
    }

    #[test]
    fn negative_indices_and_missing_uvs() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n", Path::new("t.obj")).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn out_of_range_index_names_the_line() {
        let err = parse_obj("v 0 0 0\nf 1 2 3\n", Path::new("t.obj")).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }
}
