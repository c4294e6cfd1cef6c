use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use super::model::Mesh;
use crate::error::{Error, Result};

/// Formats `x` with 9 significant digits, `%g` style.
fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".to_string()
        } else {
            s
        }
    } else {
        format!("{x:.8e}")
    }
}

/// Writes `v x y z` lines followed by 1-based `f a b c` lines.
pub fn write_obj<W: Write>(mesh: &Mesh, mut out: W) -> Result<()> {
    if mesh.vertices.is_empty() || mesh.faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", sig9(v.x), sig9(v.y), sig9(v.z))?;
    }
    for f in &mesh.faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

/// Exports `mesh` as Wavefront OBJ. Nothing is written for an empty mesh.
pub fn export_obj(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    if mesh.vertices.is_empty() || mesh.faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut buffer = Vec::new();
    write_obj(mesh, &mut buffer)?;
    std::fs::write(path, buffer)?;
    Ok(())
}

/// Reads the `v`/`f` subset written by [`write_obj`].
pub fn parse_obj(text: &str) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let bad = || Error::InvalidInput(format!("OBJ line {}: `{line}`", line_no + 1));
        match fields.next() {
            Some("v") => {
                let c: Vec<f64> = fields
                    .map(|f| f.parse::<f64>().map_err(|_| bad()))
                    .collect::<Result<_>>()?;
                if c.len() < 3 {
                    return Err(bad());
                }
                vertices.push(Vector3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = fields
                    .map(|f| {
                        f.split('/')
                            .next()
                            .and_then(|i| i.parse::<usize>().ok())
                            .filter(|i| *i >= 1)
                            .map(|i| i - 1)
                            .ok_or_else(bad)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(bad());
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    Ok(Mesh { vertices, faces })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Mesh {
        Mesh {
            vertices: vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            faces: vec![[0, 1, 2]],
        }
    }

    #[test]
    fn single_triangle_layout() {
        let mut buf = Vec::new();
        write_obj(&triangle(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 3);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 1);
        assert!(text.contains("f 1 2 3"));
    }

    #[test]
    fn significant_digits() {
        assert_eq!(sig9(0.123456789123), "0.123456789");
        assert_eq!(sig9(-1.5), "-1.5");
        assert_eq!(sig9(1234.56789012), "1234.56789");
        assert_eq!(sig9(1.0e-7), "1.00000000e-7");
        assert_eq!(sig9(-0.0), "0");
    }

    #[test]
    fn empty_mesh_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.obj");
        let mesh = Mesh {
            vertices: vec![],
            faces: vec![],
        };
        assert!(matches!(export_obj(&mesh, &path), Err(Error::EmptyMesh)));
        assert!(!path.exists());
    }
}
