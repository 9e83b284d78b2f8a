//! Marching cubes over a regular grid.
//!
//! The case table is derived once at startup: for each sign configuration,
//! the crossing edges on every cube face are joined into segments, the
//! segments are chained into loops and each loop is fan-triangulated. An
//! ambiguous face (alternating signs) always separates its positive corners,
//! a rule that depends only on the face itself, so neighboring cells agree
//! and the surface is closed wherever the grid is.

use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{Aabb, Point, Vector};
use crate::mesh::TriMesh;

/// Corner `i` of the unit cube sits at `(i & 1, (i >> 1) & 1, (i >> 2) & 1)`.
fn corner(i: usize) -> Vector {
    Vector::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64)
}

/// The 12 cube edges as corner pairs, lower corner first.
fn cube_edges() -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(12);
    for a in 0..8 {
        for bit in 0..3 {
            if a & (1 << bit) == 0 {
                out.push((a, a | (1 << bit)));
            }
        }
    }
    out
}

/// Triangles per configuration, as cube-edge indices.
type Table = Vec<Vec<[usize; 3]>>;

fn table() -> &'static Table {
    static TABLE: OnceLock<Table> = OnceLock::new();
    TABLE.get_or_init(build_table)
}

fn build_table() -> Table {
    let edges = cube_edges();
    let edge_index = |a: usize, b: usize| {
        edges
            .iter()
            .position(|&(x, y)| (x, y) == (a.min(b), a.max(b)))
            .expect("cube edge")
    };
    let mid = |e: usize| (corner(edges[e].0) + corner(edges[e].1)) * 0.5;
    // faces: cyclic corner order and outward normal
    let mut faces = Vec::new();
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in 0..2 {
            let at = |du: usize, dv: usize| (side << axis) | (du << u) | (dv << v);
            let mut normal = Vector::zeros();
            normal[axis] = if side == 1 { 1.0 } else { -1.0 };
            faces.push(([at(0, 0), at(1, 0), at(1, 1), at(0, 1)], normal));
        }
    }

    let mut out = vec![Vec::new(); 256];
    for (config, tris) in out.iter_mut().enumerate() {
        let positive = |c: usize| config & (1 << c) != 0;
        let mut next: HashMap<usize, usize> = HashMap::new();
        for (cs, normal) in &faces {
            let crossing: Vec<usize> = (0..4)
                .filter(|&k| positive(cs[k]) != positive(cs[(k + 1) % 4]))
                .collect();
            // each segment isolates one positive corner or run of corners
            let mut segments: Vec<(usize, usize, usize)> = Vec::new();
            match crossing.len() {
                0 => {}
                2 => {
                    let (k0, k1) = (crossing[0], crossing[1]);
                    let ea = edge_index(cs[k0], cs[(k0 + 1) % 4]);
                    let eb = edge_index(cs[k1], cs[(k1 + 1) % 4]);
                    let pc = *cs.iter().find(|&&c| positive(c)).expect("positive corner");
                    segments.push((ea, eb, pc));
                }
                4 => {
                    for k in 0..4 {
                        if positive(cs[k]) {
                            let before = edge_index(cs[(k + 3) % 4], cs[k]);
                            let after = edge_index(cs[k], cs[(k + 1) % 4]);
                            segments.push((before, after, cs[k]));
                        }
                    }
                }
                _ => unreachable!("odd number of sign changes around a face"),
            }
            for (ea, eb, pc) in segments {
                // positive corner on the left, seen from outside the cube
                let (a, b) = (mid(ea), mid(eb));
                let left = (b - a).cross(&(corner(pc) - a)).dot(normal) > 0.0;
                let (from, to) = if left { (ea, eb) } else { (eb, ea) };
                next.insert(from, to);
            }
        }
        let mut starts: Vec<usize> = next.keys().copied().collect();
        starts.sort_unstable();
        let mut used = [false; 12];
        for s in starts {
            if used[s] {
                continue;
            }
            let mut lp = vec![s];
            used[s] = true;
            let mut cur = next[&s];
            while cur != s {
                used[cur] = true;
                lp.push(cur);
                cur = next[&cur];
            }
            for k in 1..lp.len() - 1 {
                tris.push([lp[0], lp[k], lp[k + 1]]);
            }
        }
    }

    // orient every triangle along the field gradient (toward positive);
    // one reference case fixes the convention for the whole table
    let t = out[1][0];
    let n = (mid(t[1]) - mid(t[0])).cross(&(mid(t[2]) - mid(t[0])));
    let toward_positive = n.dot(&(corner(0) - mid(t[0]))) > 0.0;
    if !toward_positive {
        for tris in &mut out {
            for t in tris.iter_mut() {
                t.swap(1, 2);
            }
        }
    }
    out
}

/// Regular sampling grid: `resolution` cells along the longest axis of the
/// box, cubic cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub resolution: usize,
    pub bbox: Aabb,
}

impl GridSpec {
    pub fn new(resolution: usize, bbox: Aabb) -> Result<Self> {
        if resolution < 8 {
            return Err(Error::InvalidMesh(format!("grid resolution {resolution} is below 8")));
        }
        if bbox.is_empty() || !(bbox.diagonal() > 0.0) {
            return Err(Error::InvalidMesh("empty grid box".into()));
        }
        Ok(GridSpec { resolution, bbox })
    }

    pub fn cell_size(&self) -> f64 {
        self.bbox.extent().max() / self.resolution as f64
    }

    /// Node counts per axis.
    pub fn dims(&self) -> [usize; 3] {
        let h = self.cell_size();
        let e = self.bbox.extent();
        let cells = |k: usize| ((e[k] / h).ceil() as usize).max(1);
        [cells(0) + 1, cells(1) + 1, cells(2) + 1]
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Point {
        let h = self.cell_size();
        self.bbox.min + Vector::new(i as f64 * h, j as f64 * h, k as f64 * h)
    }
}

/// Triangulates the zero set of `f` on the grid. Triangle normals point
/// toward positive values. Non-finite samples count as positive.
pub fn marching_cubes<F>(f: F, g: &GridSpec) -> Result<TriMesh>
where
    F: Fn(&Point) -> f64 + Sync,
{
    let [nx, ny, nz] = g.dims();
    let values: Vec<f64> = (0..nz)
        .into_par_iter()
        .flat_map_iter(|k| {
            let f = &f;
            (0..ny).flat_map(move |j| (0..nx).map(move |i| f(&g.node(i, j, k))))
        })
        .collect();
    let at = |i: usize, j: usize, k: usize| values[(k * ny + j) * nx + i];
    let positive = |v: f64| !(v < 0.0);

    let edges = cube_edges();
    let table = table();
    let mut vertices: Vec<Point> = Vec::new();
    let mut index: HashMap<(usize, usize, usize, usize), usize> = HashMap::new();
    let mut triangles = Vec::new();
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let node = |c: usize| (i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                let mut config = 0;
                for c in 0..8 {
                    let (a, b, d) = node(c);
                    if positive(at(a, b, d)) {
                        config |= 1 << c;
                    }
                }
                if config == 0 || config == 255 {
                    continue;
                }
                let mut vertex = |e: usize| {
                    let (c0, c1) = edges[e];
                    let (a, b, d) = node(c0);
                    let axis = (c1 ^ c0).trailing_zeros() as usize;
                    *index.entry((a, b, d, axis)).or_insert_with(|| {
                        let (v0, v1) = (at(a, b, d), {
                            let (x, y, z) = node(c1);
                            at(x, y, z)
                        });
                        let t = if v0.is_finite() && v1.is_finite() && v0 != v1 {
                            (v0 / (v0 - v1)).clamp(0.0, 1.0)
                        } else {
                            0.5
                        };
                        let p0 = g.node(a, b, d);
                        let mut p = p0;
                        p[axis] += t * g.cell_size();
                        vertices.push(p);
                        vertices.len() - 1
                    })
                };
                for t in &table[config] {
                    triangles.push([vertex(t[0]), vertex(t[1]), vertex(t[2])]);
                }
            }
        }
    }
    if triangles.is_empty() {
        return Err(Error::EmptyIsosurface);
    }
    TriMesh::from_soup(vertices, triangles).map_err(|e| match e {
        Error::EmptyMesh => Error::EmptyIsosurface,
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn cube_box(r: f64) -> Aabb {
        Aabb::from_points([Point::new(-r, -r, -r), Point::new(r, r, r)].iter())
    }

    #[test]
    fn table_is_complement_symmetric_in_size() {
        let t = table();
        assert!(t[0].is_empty() && t[255].is_empty());
        assert_eq!(t[1].len(), 1);
        for (c, tris) in t.iter().enumerate() {
            assert!(tris.len() <= 5, "config {c} has {} triangles", tris.len());
        }
    }

    fn edge_use(m: &TriMesh) -> HashMap<(usize, usize), (usize, i32)> {
        let mut count: HashMap<(usize, usize), (usize, i32)> = HashMap::new();
        for t in m.triangles() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let e = count.entry((a.min(b), a.max(b))).or_default();
                e.0 += 1;
                e.1 += if a < b { 1 } else { -1 };
            }
        }
        count
    }

    #[test]
    fn sphere_is_watertight_and_close() {
        let g = GridSpec::new(64, cube_box(1.3)).unwrap();
        let m = marching_cubes(|p: &Point| p.coords.norm_squared() - 1.0, &g).unwrap();
        for (_, (n, balance)) in edge_use(&m) {
            assert_eq!(n, 2);
            assert_eq!(balance, 0, "consistent orientation");
        }
        let h = g.cell_size();
        for p in m.vertices() {
            assert!((p.coords.norm() - 1.0).abs() <= 1.5 * h);
        }
        // outward: normals point toward positive values
        let t = m.triangles()[0];
        let v = m.vertices();
        let n = (v[t[1]] - v[t[0]]).cross(&(v[t[2]] - v[t[0]]));
        assert!(n.dot(&v[t[0]].coords) > 0.0);
    }

    #[test]
    fn every_configuration_closes_on_a_small_grid() {
        // random signs on a 4x4x4 node grid padded with negative nodes
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let vals: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = |p: &Point| {
                let idx = |x: f64| (x.round() as i64 - 1).clamp(-1, 4);
                let (i, j, k) = (idx(p.x), idx(p.y), idx(p.z));
                if !(0..4).contains(&i) || !(0..4).contains(&j) || !(0..4).contains(&k) {
                    return -1.0;
                }
                vals[(k * 16 + j * 4 + i) as usize]
            };
            let g = GridSpec::new(
                8,
                Aabb::from_points([Point::new(0.0, 0.0, 0.0), Point::new(8.0, 8.0, 8.0)].iter()),
            )
            .unwrap();
            let Ok(m) = marching_cubes(f, &g) else { continue };
            for (_, (n, balance)) in edge_use(&m) {
                assert_eq!(n, 2);
                assert_eq!(balance, 0);
            }
        }
    }

    #[test]
    fn no_sign_change_is_empty() {
        let g = GridSpec::new(8, cube_box(1.0)).unwrap();
        assert!(matches!(marching_cubes(|_: &Point| 1.0, &g), Err(Error::EmptyIsosurface)));
        assert!(GridSpec::new(4, cube_box(1.0)).is_err());
    }
}
