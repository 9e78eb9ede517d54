//! Wavefront OBJ export (ASCII `v`/`vn`/`f` records, 1-based indices).

use std::io::{self, Write};

use super::MeshChunk;

/// Writes each named group of chunks as an `o` object. Vertex normals share the
/// vertex numbering, so faces are written as `f a//a b//b c//c`.
pub fn write_obj<W: Write>(out: &mut W, groups: &[(&str, &[MeshChunk])]) -> io::Result<()> {
    let mut base = 1u64;
    for (name, chunks) in groups {
        writeln!(out, "o {name}")?;
        for chunk in chunks.iter() {
            for v in &chunk.vertices {
                writeln!(out, "v {} {} {}", v[0], v[1], v[2])?;
            }
            for n in &chunk.normals {
                writeln!(out, "vn {} {} {}", n[0], n[1], n[2])?;
            }
            for t in chunk.indices.chunks_exact(3) {
                let (a, b, c) = (
                    base + t[0] as u64,
                    base + t[1] as u64,
                    base + t[2] as u64,
                );
                writeln!(out, "f {a}//{a} {b}//{b} {c}//{c}")?;
            }
            base += chunk.vertices.len() as u64;
        }
    }
    Ok(())
}

pub fn to_obj_string(groups: &[(&str, &[MeshChunk])]) -> String {
    let mut buf = Vec::new();
    write_obj(&mut buf, groups).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("obj output is ascii")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_are_one_based_and_offset_per_chunk() {
        let tri = MeshChunk {
            vertices: vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            normals: vec![[0.0, 0.0, 1.0]; 3],
            indices: vec![0, 1, 2],
            ..Default::default()
        };
        let chunks = [tri.clone(), tri];
        let s = to_obj_string(&[("earth", &chunks)]);
        let faces: Vec<&str> = s.lines().filter(|l| l.starts_with("f ")).collect();
        assert_eq!(faces, vec!["f 1//1 2//2 3//3", "f 4//4 5//5 6//6"]);
        assert_eq!(s.lines().filter(|l| l.starts_with("v ")).count(), 6);
        assert_eq!(s.lines().filter(|l| l.starts_with("vn ")).count(), 6);
        assert!(s.starts_with("o earth\n"));
    }
}
