//! Mesh file formats: OBJ, PLY (ASCII and binary), STL (binary and ASCII).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ply_rs::parser::Parser;
use ply_rs::ply::{
    Addable, DefaultElement, ElementDef, Encoding, Ply, Property, PropertyDef, PropertyType,
    ScalarType,
};
use ply_rs::writer::Writer;

use super::TriMesh;
use crate::error::{Error, Result};
use crate::geom::Point;

/// Loads a mesh, choosing the format from the file extension.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let (vertices, triangles) = match ext.as_str() {
        "obj" => read_obj(path)?,
        "ply" => read_ply(path)?,
        "stl" => read_stl(path)?,
        _ => return Err(parse_error(path, format!("unsupported mesh format '{ext}'"))),
    };
    if triangles.is_empty() {
        return Err(Error::EmptyMesh);
    }
    TriMesh::from_soup(vertices, triangles).map_err(|e| match e {
        Error::InvalidMesh(msg) => parse_error(path, msg),
        other => other,
    })
}

fn parse_error(path: &Path, message: impl Into<String>) -> Error {
    Error::ParseError {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

type Soup = (Vec<Point>, Vec<[usize; 3]>);

fn read_obj(path: &Path) -> Result<Soup> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let err = |msg: &str| parse_error(path, format!("line {}: {msg}", lineno + 1));
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in &mut c {
                    *slot = tokens
                        .next()
                        .and_then(|t| t.parse::<f64>().ok())
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| err("bad vertex coordinate"))?;
                }
                vertices.push(Point::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for t in tokens {
                    let idx: i64 = t
                        .split('/')
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err("bad face index"))?;
                    let resolved = match idx {
                        i if i > 0 => i - 1,
                        i if i < 0 => vertices.len() as i64 + i,
                        _ => return Err(err("face index 0")),
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(err("face index out of range"));
                    }
                    poly.push(resolved as usize);
                }
                if poly.len() < 3 {
                    return Err(err("face with fewer than 3 vertices"));
                }
                for k in 1..poly.len() - 1 {
                    triangles.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((vertices, triangles))
}

fn read_stl(path: &Path) -> Result<Soup> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() >= 84 {
        let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
        if bytes.len() == 84 + 50 * n {
            let mut vertices = Vec::with_capacity(3 * n);
            for k in 0..n {
                let rec = &bytes[84 + 50 * k..84 + 50 * (k + 1)];
                for v in 0..3 {
                    let off = 12 + 12 * v;
                    let c: Vec<f64> = (0..3)
                        .map(|i| {
                            let o = off + 4 * i;
                            f32::from_le_bytes(rec[o..o + 4].try_into().unwrap()) as f64
                        })
                        .collect();
                    vertices.push(Point::new(c[0], c[1], c[2]));
                }
            }
            let triangles = (0..n).map(|k| [3 * k, 3 * k + 1, 3 * k + 2]).collect();
            return Ok((vertices, triangles));
        }
    }
    let text = std::str::from_utf8(&bytes).ok().filter(|t| t.trim_start().starts_with("solid"));
    let Some(text) = text else {
        return Err(parse_error(path, "truncated binary STL"));
    };
    let mut vertices = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut tokens = line.split_whitespace();
        if tokens.next() == Some("vertex") {
            let c: Vec<f64> = tokens.filter_map(|t| t.parse().ok()).collect();
            if c.len() != 3 {
                return Err(parse_error(path, format!("line {}: bad vertex", lineno + 1)));
            }
            vertices.push(Point::new(c[0], c[1], c[2]));
        }
    }
    if vertices.len() % 3 != 0 {
        return Err(parse_error(path, "incomplete facet"));
    }
    let triangles = (0..vertices.len() / 3).map(|k| [3 * k, 3 * k + 1, 3 * k + 2]).collect();
    Ok((vertices, triangles))
}

fn scalar(p: &Property) -> Option<f64> {
    Some(match *p {
        Property::Char(v) => v as f64,
        Property::UChar(v) => v as f64,
        Property::Short(v) => v as f64,
        Property::UShort(v) => v as f64,
        Property::Int(v) => v as f64,
        Property::UInt(v) => v as f64,
        Property::Float(v) => v as f64,
        Property::Double(v) => v,
        _ => return None,
    })
}

fn index_list(p: &Property) -> Option<Vec<i64>> {
    Some(match p {
        Property::ListChar(v) => v.iter().map(|&x| x as i64).collect(),
        Property::ListUChar(v) => v.iter().map(|&x| x as i64).collect(),
        Property::ListShort(v) => v.iter().map(|&x| x as i64).collect(),
        Property::ListUShort(v) => v.iter().map(|&x| x as i64).collect(),
        Property::ListInt(v) => v.iter().map(|&x| x as i64).collect(),
        Property::ListUInt(v) => v.iter().map(|&x| x as i64).collect(),
        _ => return None,
    })
}

fn read_ply(path: &Path) -> Result<Soup> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let ply = Parser::<DefaultElement>::new()
        .read_ply(&mut reader)
        .map_err(|e| parse_error(path, e.to_string()))?;
    let declared = |name: &str| ply.header.elements.get(name).map_or(0, |e| e.count);
    let vertex_elems = ply.payload.get("vertex").map(Vec::as_slice).unwrap_or(&[]);
    let face_elems = ply.payload.get("face").map(Vec::as_slice).unwrap_or(&[]);
    if vertex_elems.len() != declared("vertex") || face_elems.len() != declared("face") {
        return Err(parse_error(path, "element count mismatch"));
    }
    let mut vertices = Vec::with_capacity(vertex_elems.len());
    for v in vertex_elems {
        let coord = |k: &str| v.get(k).and_then(scalar);
        match (coord("x"), coord("y"), coord("z")) {
            (Some(x), Some(y), Some(z)) => vertices.push(Point::new(x, y, z)),
            _ => return Err(parse_error(path, "vertex without x/y/z")),
        }
    }
    let mut triangles = Vec::with_capacity(face_elems.len());
    for f in face_elems {
        let list = f
            .get("vertex_indices")
            .or_else(|| f.get("vertex_index"))
            .and_then(index_list)
            .ok_or_else(|| parse_error(path, "face without vertex index list"))?;
        if list.len() < 3 || list.iter().any(|&i| i < 0 || i as usize >= vertices.len()) {
            return Err(parse_error(path, "bad face index list"));
        }
        for k in 1..list.len() - 1 {
            triangles.push([list[0] as usize, list[k] as usize, list[k + 1] as usize]);
        }
    }
    Ok((vertices, triangles))
}

/// Writes a Wavefront OBJ with optional per-vertex normals.
pub fn write_obj(
    path: impl AsRef<Path>,
    vertices: &[Point],
    triangles: &[[usize; 3]],
    normals: Option<&[crate::geom::Vector]>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let result = (|| -> std::io::Result<()> {
        for v in vertices {
            writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
        }
        if let Some(ns) = normals {
            for n in ns {
                writeln!(w, "vn {} {} {}", n.x, n.y, n.z)?;
            }
        }
        for t in triangles {
            let [a, b, c] = t.map(|i| i + 1);
            if normals.is_some() {
                writeln!(w, "f {a}//{a} {b}//{b} {c}//{c}")?;
            } else {
                writeln!(w, "f {a} {b} {c}")?;
            }
        }
        w.flush()
    })();
    result.map_err(|e| Error::io(path, e))
}

/// Writes a binary STL.
pub fn write_stl(path: impl AsRef<Path>, vertices: &[Point], triangles: &[[usize; 3]]) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = vec![0u8; 80];
    bytes.extend_from_slice(&(triangles.len() as u32).to_le_bytes());
    for t in triangles {
        let [a, b, c] = t.map(|i| vertices[i]);
        let n = (b - a).cross(&(c - a));
        let n = n.try_normalize(0.0).unwrap_or(n);
        for v in [n, a.coords, b.coords, c.coords] {
            for k in 0..3 {
                bytes.extend_from_slice(&(v[k] as f32).to_le_bytes());
            }
        }
        bytes.extend_from_slice(&[0, 0]);
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Per-vertex colors plus a scalar attribute stored as `quality`.
#[derive(Debug, Clone, Copy)]
pub struct PlyColors<'a> {
    pub rgb: &'a [[u8; 3]],
    pub quality: &'a [f64],
}

/// Writes an ASCII PLY, optionally with per-vertex colors and quality.
pub fn write_ply(
    path: impl AsRef<Path>,
    vertices: &[Point],
    triangles: &[[usize; 3]],
    colors: Option<PlyColors<'_>>,
) -> Result<()> {
    let path = path.as_ref();
    let mut ply = Ply::<DefaultElement>::new();
    ply.header.encoding = Encoding::Ascii;

    let mut vdef = ElementDef::new("vertex".to_string());
    for k in ["x", "y", "z"] {
        vdef.properties
            .add(PropertyDef::new(k.to_string(), PropertyType::Scalar(ScalarType::Double)));
    }
    if colors.is_some() {
        for k in ["red", "green", "blue"] {
            vdef.properties
                .add(PropertyDef::new(k.to_string(), PropertyType::Scalar(ScalarType::UChar)));
        }
        vdef.properties.add(PropertyDef::new(
            "quality".to_string(),
            PropertyType::Scalar(ScalarType::Double),
        ));
    }
    ply.header.elements.add(vdef);
    let mut fdef = ElementDef::new("face".to_string());
    fdef.properties.add(PropertyDef::new(
        "vertex_indices".to_string(),
        PropertyType::List(ScalarType::UChar, ScalarType::Int),
    ));
    ply.header.elements.add(fdef);

    let vlist: Vec<DefaultElement> = vertices
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut e = DefaultElement::new();
            e.insert("x".to_string(), Property::Double(v.x));
            e.insert("y".to_string(), Property::Double(v.y));
            e.insert("z".to_string(), Property::Double(v.z));
            if let Some(c) = colors {
                for (k, name) in ["red", "green", "blue"].iter().enumerate() {
                    e.insert(name.to_string(), Property::UChar(c.rgb[i][k]));
                }
                e.insert("quality".to_string(), Property::Double(c.quality[i]));
            }
            e
        })
        .collect();
    let flist: Vec<DefaultElement> = triangles
        .iter()
        .map(|t| {
            let mut e = DefaultElement::new();
            e.insert(
                "vertex_indices".to_string(),
                Property::ListInt(t.iter().map(|&i| i as i32).collect()),
            );
            e
        })
        .collect();
    ply.payload.insert("vertex".to_string(), vlist);
    ply.payload.insert("face".to_string(), flist);

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    Writer::new()
        .write_ply(&mut w, &mut ply)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
