//! Patch tessellation, deviation measurement and file output.

pub mod mc;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitter::FittedPatch;
use crate::geom::{Aabb, Point, Vector};
use crate::implicit::{Faithful, IPatchDef, ScalarField};
use crate::mesh::{write_obj, write_ply, PlyColors, TriMesh};
use crate::network::NetworkFile;
pub use mc::{marching_cubes, GridSpec};

/// Average and maximum of unsigned deviations, absolute and as a percentage
/// of a reference diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DeviationStats {
    pub avg: f64,
    pub max: f64,
    pub avg_pct: f64,
    pub max_pct: f64,
    pub count: usize,
}

impl DeviationStats {
    pub fn from_values(values: &[f64], diagonal: f64) -> Self {
        let count = values.len();
        let sum: f64 = values.iter().sum();
        let max = values.iter().fold(0.0f64, |m, v| m.max(*v));
        let avg = if count == 0 { 0.0 } else { sum / count as f64 };
        DeviationStats {
            avg,
            max,
            avg_pct: 100.0 * avg / diagonal,
            max_pct: 100.0 * max / diagonal,
            count,
        }
    }

    /// Pooled statistics over several samples.
    pub fn combine(parts: &[DeviationStats], diagonal: f64) -> Self {
        let count: usize = parts.iter().map(|s| s.count).sum();
        let sum: f64 = parts.iter().map(|s| s.avg * s.count as f64).sum();
        let max = parts.iter().fold(0.0f64, |m, s| m.max(s.max));
        let avg = if count == 0 { 0.0 } else { sum / count as f64 };
        DeviationStats {
            avg,
            max,
            avg_pct: 100.0 * avg / diagonal,
            max_pct: 100.0 * max / diagonal,
            count,
        }
    }
}

/// Zero set of the patch's faithful field on the grid. With `clip`,
/// triangles whose centroid lies outside any bounding are dropped.
pub fn patch_isosurface(def: &IPatchDef, g: &GridSpec, clip: bool) -> Result<TriMesh> {
    let mesh = marching_cubes(
        |p: &Point| def.faithful(p).unwrap_or_else(|_| def.value(p)),
        g,
    )?;
    if !clip {
        return Ok(mesh);
    }
    let v = mesh.vertices();
    let kept: Vec<[usize; 3]> = mesh
        .triangles()
        .iter()
        .filter(|t| {
            let c = Point::from((v[t[0]].coords + v[t[1]].coords + v[t[2]].coords) / 3.0);
            def.in_domain(&c, 0.0)
        })
        .copied()
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyIsosurface);
    }
    TriMesh::from_soup(v.to_vec(), kept)
}

/// Result of [`polish_vertices`]: the moved mesh and the vertices that did
/// not reach the tolerance (left at their best position).
#[derive(Debug, Clone)]
pub struct Polished {
    pub mesh: TriMesh,
    pub failed: Vec<usize>,
}

impl Polished {
    pub fn into_result(self) -> Result<TriMesh> {
        if self.failed.is_empty() {
            Ok(self.mesh)
        } else {
            Err(Error::PolishFailed {
                count: self.failed.len(),
            })
        }
    }
}

/// Damped Newton steps along the gradient until `|f| ≤ tol`, at most 50
/// per vertex. A step is only taken if it lowers `|f|`.
pub fn polish_point<F: ScalarField + ?Sized>(f: &F, p: &Point, tol: f64) -> (Point, bool) {
    let mut p = *p;
    let mut v = f.value(&p);
    if !v.is_finite() {
        return (p, false);
    }
    for _ in 0..50 {
        if v.abs() <= tol {
            return (p, true);
        }
        let g = f.gradient(&p);
        let gg = g.norm_squared();
        if !(gg > 0.0) || !gg.is_finite() {
            return (p, false);
        }
        let step: Vector = g * (v / gg);
        let mut scale = 1.0;
        let mut moved = false;
        for _ in 0..12 {
            let q = p - step * scale;
            let w = f.value(&q);
            if w.abs() < v.abs() {
                p = q;
                v = w;
                moved = true;
                break;
            }
            scale *= 0.5;
        }
        if !moved {
            return (p, false);
        }
    }
    (p, v.abs() <= tol)
}

pub fn polish_vertices<F: ScalarField + ?Sized>(f: &F, mesh: &TriMesh, tol: f64) -> Result<Polished> {
    let moved: Vec<(Point, bool)> = mesh
        .vertices()
        .par_iter()
        .map(|p| polish_point(f, p, tol))
        .collect();
    let failed = moved
        .iter()
        .enumerate()
        .filter(|(_, (_, ok))| !ok)
        .map(|(i, _)| i)
        .collect();
    let vertices: Vec<Point> = moved.into_iter().map(|(p, _)| p).collect();
    let triangles = mesh.triangles().to_vec();
    let mesh = match TriMesh::new(vertices.clone(), triangles.clone()) {
        Ok(m) => m,
        Err(_) => TriMesh::from_soup(vertices, triangles)?,
    };
    Ok(Polished { mesh, failed })
}

/// Per-vertex distance from `tess` to `target`, with statistics relative to
/// the target's bounding-box diagonal.
pub fn deviation_map(tess: &TriMesh, target: &TriMesh) -> (Vec<f64>, DeviationStats) {
    let d: Vec<f64> = tess
        .vertices()
        .par_iter()
        .map(|p| target.closest_point(p).distance)
        .collect();
    let stats = DeviationStats::from_values(&d, target.scale());
    (d, stats)
}

/// Blue → green → red over `[0, max]`.
pub fn colormap(values: &[f64], max: f64) -> Vec<[u8; 3]> {
    values
        .iter()
        .map(|&v| {
            let t = if max > 0.0 { (v / max).clamp(0.0, 1.0) } else { 0.0 };
            let (r, g, b) = if t < 0.5 {
                let s = 2.0 * t;
                (0.0, s, 1.0 - s)
            } else {
                let s = 2.0 * t - 1.0;
                (s, 1.0 - s, 0.0)
            };
            [r, g, b].map(|c| (255.0 * c).round() as u8)
        })
        .collect()
}

pub fn export_colored(mesh: &TriMesh, scalars: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let max = scalars.iter().fold(0.0f64, |m, v| m.max(*v));
    let rgb = colormap(scalars, max);
    write_ply(
        path,
        mesh.vertices(),
        mesh.triangles(),
        Some(PlyColors {
            rgb: &rgb,
            quality: scalars,
        }),
    )
}

pub fn export_mesh(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    write_obj(path, mesh.vertices(), mesh.triangles(), Some(mesh.normals()))
}

/// Grid for a fitted patch: its stored box at the given resolution.
pub fn patch_grid(fp: &FittedPatch, resolution: usize) -> Result<GridSpec> {
    GridSpec::new(resolution, fp.bbox)
}

/// Connected component of `mesh` holding the vertex nearest to `anchor`.
/// Components are joined through shared vertices.
pub fn main_sheet(mesh: &TriMesh, anchor: &Point) -> Result<TriMesh> {
    let v = mesh.vertices();
    let mut parent: Vec<usize> = (0..v.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for t in mesh.triangles() {
        let a = find(&mut parent, t[0]);
        for &k in &t[1..] {
            let b = find(&mut parent, k);
            parent[b] = a;
        }
    }
    let seed = (0..v.len())
        .min_by(|&i, &j| (v[i] - anchor).norm().total_cmp(&(v[j] - anchor).norm()))
        .ok_or(Error::EmptyIsosurface)?;
    let root = find(&mut parent, seed);
    let kept: Vec<[usize; 3]> = mesh
        .triangles()
        .iter()
        .filter(|t| find(&mut parent, t[0]) == root)
        .copied()
        .collect();
    if kept.len() == mesh.triangles().len() {
        return Ok(mesh.clone());
    }
    let mut index = vec![usize::MAX; v.len()];
    let mut vertices = Vec::new();
    let triangles = kept
        .iter()
        .map(|t| {
            t.map(|i| {
                if index[i] == usize::MAX {
                    index[i] = vertices.len();
                    vertices.push(v[i]);
                }
                index[i]
            })
        })
        .collect();
    TriMesh::new(vertices, triangles)
}

/// Polished tessellation of a fitted patch. With `clip`, the zero set is
/// cut to the patch domain and reduced to the sheet through the center
/// point; other branches of the zero set inside the domain are dropped.
pub fn tessellate_patch(fp: &FittedPatch, resolution: usize, clip: bool) -> Result<Polished> {
    let g = patch_grid(fp, resolution)?;
    let mut raw = patch_isosurface(&fp.def, &g, clip)?;
    if clip {
        raw = main_sheet(&raw, &fp.center)?;
    }
    polish_vertices(&Faithful(&fp.def), &raw, 1e-8 * fp.def.scale())
}

/// Offset copy of a fitted patch; its box grows by `|d|`.
pub fn offset_patch(fp: &FittedPatch, d: f64) -> Result<FittedPatch> {
    let def = fp.def.offset(d)?;
    let pad = Vector::repeat(d.abs());
    Ok(FittedPatch {
        def,
        bbox: Aabb {
            min: fp.bbox.min - pad,
            max: fp.bbox.max + pad,
        },
        ..fp.clone()
    })
}

/// Run parameters and input fingerprint stored with a patchwork.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the network file as given.
    pub network_hash: String,
    pub config: serde_json::Value,
}

/// Fitted patches of a whole network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Patchwork {
    pub format: u32,
    /// Diagonal of the target mesh's bounding box.
    pub scale: f64,
    pub patches: Vec<FittedPatch>,
    pub stats: Option<DeviationStats>,
    /// Active network topology the patches belong to.
    pub network: NetworkFile,
    pub provenance: Provenance,
}

pub const PATCHWORK_FORMAT: u32 = 1;

pub fn save_patchwork(pw: &Patchwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(pw).map_err(|e| Error::SchemaError(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_patchwork(path: impl AsRef<Path>) -> Result<Patchwork> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let pw: Patchwork = serde_json::from_str(&text)
        .map_err(|e| Error::SchemaError(format!("{}: {e}", path.display())))?;
    if pw.format != PATCHWORK_FORMAT {
        return Err(Error::SchemaError(format!("unsupported patchwork format {}", pw.format)));
    }
    Ok(pw)
}

/// Hex SHA-256 of a byte string.
pub fn fingerprint(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
