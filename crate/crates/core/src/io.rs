//! Text formats for meshes and correspondence points.
//!
//! Meshes travel as ASCII PLY with double-precision vertex properties;
//! point sets as whitespace-separated `x y z` lines. Floats are written via
//! Rust's shortest round-trip formatting, so write/read/write is
//! byte-stable.

use crate::error::{Error, Result};
use crate::geometry::{PointSet, SurfaceMesh, Vec3};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub fn write_ply(path: &Path, mesh: &SurfaceMesh) -> Result<()> {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\ncomment spicorr surface mesh\n");
    let _ = writeln!(out, "element vertex {}", mesh.vertex_count());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    let _ = writeln!(out, "element face {}", mesh.face_count());
    out.push_str("property list uchar int vertex_indices\nend_header\n");
    for v in &mesh.vertices {
        let _ = writeln!(out, "{} {} {}", v[0], v[1], v[2]);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_ply(path: &Path) -> Result<SurfaceMesh> {
    let text = fs::read_to_string(path)?;
    let fail = |msg: &str| Error::format(path.display().to_string(), msg.to_string());
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(fail("missing ply magic"));
    }
    let mut vertex_count: Option<usize> = None;
    let mut face_count: Option<usize> = None;
    let mut saw_format = false;
    for line in lines.by_ref() {
        let line = line.trim();
        if line == "end_header" {
            break;
        }
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(fail("only ascii PLY is supported"));
                }
                saw_format = true;
            }
            Some("element") => match (tok.next(), tok.next()) {
                (Some("vertex"), Some(n)) => {
                    vertex_count = Some(n.parse().map_err(|_| fail("bad vertex count"))?)
                }
                (Some("face"), Some(n)) => {
                    face_count = Some(n.parse().map_err(|_| fail("bad face count"))?)
                }
                _ => return Err(fail("malformed element line")),
            },
            Some("property") | Some("comment") | None => {}
            Some(other) => return Err(fail(&format!("unexpected header token {other:?}"))),
        }
    }
    if !saw_format {
        return Err(fail("missing format line"));
    }
    let nv = vertex_count.ok_or_else(|| fail("missing vertex element"))?;
    let nf = face_count.ok_or_else(|| fail("missing face element"))?;

    let mut vertices: Vec<Vec3> = Vec::with_capacity(nv);
    for _ in 0..nv {
        let line = lines.next().ok_or_else(|| fail("truncated vertex list"))?;
        let mut tok = line.split_whitespace();
        let mut v = [0.0f64; 3];
        for c in &mut v {
            *c = tok
                .next()
                .ok_or_else(|| fail("short vertex line"))?
                .parse()
                .map_err(|_| fail("non-numeric vertex coordinate"))?;
        }
        vertices.push(v);
    }
    let mut faces: Vec<[usize; 3]> = Vec::with_capacity(nf);
    for _ in 0..nf {
        let line = lines.next().ok_or_else(|| fail("truncated face list"))?;
        let mut tok = line.split_whitespace();
        let arity: usize = tok
            .next()
            .ok_or_else(|| fail("empty face line"))?
            .parse()
            .map_err(|_| fail("bad face arity"))?;
        if arity != 3 {
            return Err(fail("only triangle faces are supported"));
        }
        let mut f = [0usize; 3];
        for c in &mut f {
            *c = tok
                .next()
                .ok_or_else(|| fail("short face line"))?
                .parse()
                .map_err(|_| fail("non-numeric face index"))?;
        }
        faces.push(f);
    }
    SurfaceMesh::new(vertices, faces)
}

pub fn write_particles(path: &Path, points: &PointSet) -> Result<()> {
    let mut out = String::new();
    for p in &points.points {
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_particles(path: &Path) -> Result<PointSet> {
    let text = fs::read_to_string(path)?;
    let fail = |msg: &str| Error::format(path.display().to_string(), msg.to_string());
    let mut points: Vec<Vec3> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        let mut p = [0.0f64; 3];
        for c in &mut p {
            *c = tok
                .next()
                .ok_or_else(|| fail("expected three coordinates per line"))?
                .parse()
                .map_err(|_| fail("non-numeric coordinate"))?;
        }
        if tok.next().is_some() {
            return Err(fail("expected three coordinates per line"));
        }
        points.push(p);
    }
    PointSet::new(points)
}
