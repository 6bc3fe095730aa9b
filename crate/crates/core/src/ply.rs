//! ASCII PLY read/write for point clouds and triangle meshes.
//!
//! Coordinates are written as 64-bit decimals via Rust's shortest-roundtrip
//! float formatting, so write -> read is bit-exact.

use crate::error::{Error, Result};
use crate::cloud::PointCloud;
use crate::math::Vec3;
use crate::mesh::TriangleMesh;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

pub fn write_cloud(w: &mut impl Write, cloud: &PointCloud) -> Result<()> {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.has_normals() {
        s.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    s.push_str("end_header\n");
    match cloud.normals() {
        Some(normals) => {
            for (p, n) in cloud.points().iter().zip(normals) {
                let _ = writeln!(s, "{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z);
            }
        }
        None => {
            for p in cloud.points() {
                let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
            }
        }
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn write_cloud_file(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_cloud(&mut f, cloud)
}

pub fn write_mesh(w: &mut impl Write, mesh: &TriangleMesh) -> Result<()> {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", mesh.vertices.len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    let has_normals = mesh.normals.len() == mesh.vertices.len();
    if has_normals {
        s.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    let _ = writeln!(s, "element face {}", mesh.faces.len());
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for (i, p) in mesh.vertices.iter().enumerate() {
        if has_normals {
            let n = mesh.normals[i];
            let _ = writeln!(s, "{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z);
        } else {
            let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
        }
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn write_mesh_file(path: impl AsRef<Path>, mesh: &TriangleMesh) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_mesh(&mut f, mesh)
}

struct Header {
    vertex_count: usize,
    face_count: usize,
    vertex_props: Vec<String>,
}

fn parse_header(lines: &mut impl Iterator<Item = std::io::Result<String>>) -> Result<Header> {
    let bad = |msg: &str| Error::Parse(format!("ply header: {msg}"));
    let mut first = true;
    let mut vertex_count = None;
    let mut face_count = 0usize;
    let mut vertex_props = Vec::new();
    let mut current_element = String::new();
    for line in lines {
        let line = line?;
        let line = line.trim();
        if first {
            if line != "ply" {
                return Err(bad("missing magic"));
            }
            first = false;
            continue;
        }
        if line == "end_header" {
            let vertex_count = vertex_count.ok_or_else(|| bad("no vertex element"))?;
            return Ok(Header {
                vertex_count,
                face_count,
                vertex_props,
            });
        }
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(bad("only ascii supported"));
                }
            }
            Some("comment") => {}
            Some("element") => {
                let name = tok.next().ok_or_else(|| bad("element without name"))?;
                let count: usize = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| bad("element without count"))?;
                current_element = name.to_string();
                match name {
                    "vertex" => vertex_count = Some(count),
                    "face" => face_count = count,
                    _ => return Err(bad(&format!("unsupported element {name}"))),
                }
            }
            Some("property") => {
                if current_element == "vertex" {
                    let name = tok.clone().last().ok_or_else(|| bad("property without name"))?;
                    vertex_props.push(name.to_string());
                }
            }
            _ => return Err(bad(&format!("unexpected line {line:?}"))),
        }
    }
    Err(bad("truncated header"))
}

pub fn read_cloud(r: impl Read) -> Result<PointCloud> {
    let mut lines = BufReader::new(r).lines();
    let header = parse_header(&mut lines)?;
    let idx = |name: &str| header.vertex_props.iter().position(|p| p == name);
    let (ix, iy, iz) = match (idx("x"), idx("y"), idx("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::Parse("ply vertex needs x y z".into())),
    };
    let normal_idx = match (idx("nx"), idx("ny"), idx("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    let mut points = Vec::with_capacity(header.vertex_count);
    let mut normals = Vec::with_capacity(if normal_idx.is_some() {
        header.vertex_count
    } else {
        0
    });
    for _ in 0..header.vertex_count {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse("ply truncated vertex data".into()))??;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("ply float: {e}"))))
            .collect::<Result<_>>()?;
        if vals.len() < header.vertex_props.len() {
            return Err(Error::Parse("ply vertex row too short".into()));
        }
        points.push(Vec3::new(vals[ix], vals[iy], vals[iz]));
        if let Some((a, b, c)) = normal_idx {
            normals.push(Vec3::new(vals[a], vals[b], vals[c]));
        }
    }
    if normal_idx.is_some() {
        PointCloud::with_normals(points, normals)
    } else {
        PointCloud::from_points(points)
    }
}

pub fn read_cloud_file(path: impl AsRef<Path>) -> Result<PointCloud> {
    read_cloud(std::fs::File::open(path)?)
}

pub fn read_mesh(r: impl Read) -> Result<TriangleMesh> {
    let mut lines = BufReader::new(r).lines();
    let header = parse_header(&mut lines)?;
    let idx = |name: &str| header.vertex_props.iter().position(|p| p == name);
    let (ix, iy, iz) = match (idx("x"), idx("y"), idx("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::Parse("ply vertex needs x y z".into())),
    };
    let normal_idx = match (idx("nx"), idx("ny"), idx("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    let mut mesh = TriangleMesh::default();
    for _ in 0..header.vertex_count {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse("ply truncated vertex data".into()))??;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("ply float: {e}"))))
            .collect::<Result<_>>()?;
        mesh.vertices.push(Vec3::new(vals[ix], vals[iy], vals[iz]));
        if let Some((a, b, c)) = normal_idx {
            mesh.normals.push(Vec3::new(vals[a], vals[b], vals[c]));
        }
    }
    for _ in 0..header.face_count {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse("ply truncated face data".into()))??;
        let vals: Vec<u32> = line
            .split_whitespace()
            .map(|t| t.parse::<u32>().map_err(|e| Error::Parse(format!("ply index: {e}"))))
            .collect::<std::result::Result<_, _>>()?;
        if vals.first() != Some(&3) || vals.len() != 4 {
            return Err(Error::Parse("only triangle faces supported".into()));
        }
        mesh.faces.push([vals[1], vals[2], vals[3]]);
    }
    Ok(mesh)
}

pub fn read_mesh_file(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    read_mesh(std::fs::File::open(path)?)
}
