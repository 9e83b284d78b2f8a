//! Triangle meshes: storage, normals, spatial queries and curve extraction.

mod bvh;
pub mod io;
mod polyline;
mod trace;

use std::collections::HashMap;
use std::sync::OnceLock;

pub use bvh::Nearest;
pub use io::{load_mesh, write_obj, write_ply, write_stl, PlyColors};
pub use polyline::Polyline;
pub(crate) use polyline::sub_chain;
pub use trace::{boundary_polyline, trace_field, trace_intersection};

use crate::error::{Error, Result};
use crate::geom::{normalize, triangle_area, Aabb, Point, Vector};
use bvh::Bvh;

/// Immutable indexed triangle mesh with vertex normals and a BVH.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    normals: Vec<Vector>,
    bbox: Aabb,
    bvh: Bvh,
    boundary: OnceLock<Vec<Polyline>>,
}

impl TriMesh {
    /// Strict constructor: rejects out-of-range indices, degenerate
    /// triangles and unreferenced vertices.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let bbox = Aabb::from_points(&vertices);
        let scale = bbox.diagonal();
        let min_area = 1e-12 * scale * scale;
        for (k, t) in triangles.iter().enumerate() {
            if t.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {k} index out of range")));
            }
            if triangle_area(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]) <= min_area {
                return Err(Error::InvalidMesh(format!("triangle {k} is degenerate")));
            }
        }
        let normals = estimate_vertex_normals(&vertices, &triangles)?;
        let bvh = Bvh::build(&vertices, &triangles);
        Ok(TriMesh {
            vertices,
            triangles,
            normals,
            bbox,
            bvh,
            boundary: OnceLock::new(),
        })
    }

    /// Cleaning constructor used by the loaders: welds vertices closer than
    /// `1e-9·scale`, drops degenerate triangles and unreferenced vertices.
    pub fn from_soup(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() || vertices.is_empty() {
            return Err(Error::EmptyMesh);
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= vertices.len())) {
            return Err(Error::InvalidMesh(format!("index {t:?} out of range")));
        }
        let scale = Aabb::from_points(&vertices).diagonal();
        let remap = weld(&vertices, 1e-9 * scale);
        let min_area = 1e-12 * scale * scale;
        let mut used = vec![usize::MAX; vertices.len()];
        let mut out_vertices = Vec::new();
        let mut out_triangles = Vec::with_capacity(triangles.len());
        for t in &triangles {
            let t = t.map(|i| remap[i]);
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                continue;
            }
            if triangle_area(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]) <= min_area {
                continue;
            }
            out_triangles.push(t.map(|i| {
                if used[i] == usize::MAX {
                    used[i] = out_vertices.len();
                    out_vertices.push(vertices[i]);
                }
                used[i]
            }));
        }
        TriMesh::new(out_vertices, out_triangles)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[Vector] {
        &self.normals
    }

    pub fn bbox(&self) -> &Aabb {
        &self.bbox
    }

    /// Bounding-box diagonal; the unit for all relative tolerances.
    pub fn scale(&self) -> f64 {
        self.bbox.diagonal()
    }

    pub fn face_normal(&self, t: usize) -> Vector {
        let [a, b, c] = self.triangles[t];
        let v = &self.vertices;
        (v[b] - v[a]).cross(&(v[c] - v[a])).normalize()
    }

    /// Exact Euclidean nearest point on the mesh.
    pub fn closest_point(&self, p: &Point) -> Nearest {
        self.bvh
            .nearest(&self.vertices, &self.triangles, p)
            .expect("mesh has triangles")
    }

    /// Vertex normals interpolated at the nearest point of `p`.
    pub fn normal_at(&self, p: &Point) -> Vector {
        let n = self.closest_point(p);
        let t = self.triangles[n.triangle];
        let v = (0..3).fold(Vector::zeros(), |acc, k| acc + self.normals[t[k]] * n.barycentric[k]);
        normalize(&v, 1e-12).unwrap_or_else(|| self.face_normal(n.triangle))
    }

    /// Mesh vertices inside every bounding (`B(p) ≥ −1e-6·scale`).
    pub fn filter_points<F>(&self, boundings: &[F]) -> Result<Vec<Point>>
    where
        F: Fn(&Point) -> f64,
    {
        let eps = 1e-6 * self.scale();
        let selected: Vec<Point> = self
            .vertices
            .iter()
            .filter(|p| boundings.iter().all(|b| b(p) >= -eps))
            .copied()
            .collect();
        if selected.is_empty() {
            return Err(Error::EmptySelection);
        }
        Ok(selected)
    }

    /// Interior sample points of every triangle: the three nodes of the
    /// degree-2 quadrature rule at barycentric `(2/3, 1/6, 1/6)` and
    /// permutations, in triangle order.
    pub fn facet_samples(&self) -> Vec<Point> {
        const W: [[f64; 3]; 3] = [
            [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
            [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
            [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
        ];
        self.triangles
            .iter()
            .flat_map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i].coords);
                W.map(|w| Point::from(a * w[0] + b * w[1] + c * w[2]))
            })
            .collect()
    }

    /// Closed boundary loops (first point repeated at the end), following
    /// the triangle orientation.
    pub fn boundary_loops(&self) -> &[Polyline] {
        self.boundary.get_or_init(|| {
            let mut count: HashMap<(usize, usize), usize> = HashMap::new();
            for t in &self.triangles {
                for k in 0..3 {
                    let (a, b) = (t[k], t[(k + 1) % 3]);
                    *count.entry((a.min(b), a.max(b))).or_default() += 1;
                }
            }
            let mut next: HashMap<usize, usize> = HashMap::new();
            for t in &self.triangles {
                for k in 0..3 {
                    let (a, b) = (t[k], t[(k + 1) % 3]);
                    if count[&(a.min(b), a.max(b))] == 1 {
                        next.insert(a, b);
                    }
                }
            }
            let mut starts: Vec<usize> = next.keys().copied().collect();
            starts.sort_unstable();
            let mut seen = vec![false; self.vertices.len()];
            let mut loops = Vec::new();
            for s in starts {
                if seen[s] {
                    continue;
                }
                let mut pts = vec![self.vertices[s]];
                seen[s] = true;
                let mut cur = s;
                while let Some(&n) = next.get(&cur) {
                    pts.push(self.vertices[n]);
                    if n == s || seen[n] {
                        break;
                    }
                    seen[n] = true;
                    cur = n;
                }
                if pts.len() > 3 && pts.first() == pts.last() {
                    loops.push(Polyline::new(pts));
                }
            }
            loops
        })
    }
}

/// Angle-weighted vertex normals.
pub fn estimate_vertex_normals(vertices: &[Point], triangles: &[[usize; 3]]) -> Result<Vec<Vector>> {
    if triangles.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut acc = vec![Vector::zeros(); vertices.len()];
    let mut touched = vec![false; vertices.len()];
    for t in triangles {
        let p = t.map(|i| vertices[i]);
        let Some(n) = normalize(&(p[1] - p[0]).cross(&(p[2] - p[0])), 0.0) else {
            continue;
        };
        for k in 0..3 {
            let e1 = p[(k + 1) % 3] - p[k];
            let e2 = p[(k + 2) % 3] - p[k];
            acc[t[k]] += n * e1.angle(&e2);
            touched[t[k]] = true;
        }
    }
    acc.iter()
        .enumerate()
        .map(|(i, v)| {
            if !touched[i] {
                return Err(Error::IsolatedVertex(i));
            }
            normalize(v, 1e-300).ok_or_else(|| Error::InvalidMesh(format!("vertex {i} normal cancels")))
        })
        .collect()
}

/// Representative index per vertex after merging points within `tol`.
fn weld(vertices: &[Point], tol: f64) -> Vec<usize> {
    if tol <= 0.0 {
        return (0..vertices.len()).collect();
    }
    let key = |p: &Point| p.coords.map(|c| (c / tol).floor() as i64);
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut remap = Vec::with_capacity(vertices.len());
    for (i, p) in vertices.iter().enumerate() {
        let k = key(p);
        let mut found = None;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = grid.get(&[k.x + dx, k.y + dy, k.z + dz]) {
                        if let Some(&j) = list.iter().find(|&&j| (vertices[j] - p).norm() <= tol) {
                            found = Some(j);
                            break 'search;
                        }
                    }
                }
            }
        }
        match found {
            Some(j) => remap.push(j),
            None => {
                grid.entry([k.x, k.y, k.z]).or_default().push(i);
                remap.push(i);
            }
        }
    }
    remap
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(m: &TriMesh, p: &Point) -> f64 {
        m.triangles()
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| m.vertices()[i]);
                oracle_point_triangle(p, &a, &b, &c)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Independent oracle: projection onto the plane when inside, otherwise
    /// the best of the three edge distances.
    fn oracle_point_triangle(p: &Point, a: &Point, b: &Point, c: &Point) -> f64 {
        let n = (b - a).cross(&(c - a));
        let q = p - n * (n.dot(&(p - a)) / n.norm_squared());
        let inside = [(a, b), (b, c), (c, a)]
            .iter()
            .all(|(u, v)| (*v - *u).cross(&(q - *u)).dot(&n) >= 0.0);
        if inside {
            return (p - q).norm();
        }
        [(a, b), (b, c), (c, a)]
            .iter()
            .map(|(u, v)| {
                let d = *v - *u;
                let t = ((p - *u).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
                (p - (*u + d * t)).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn cube_mesh_queries() {
        let m = fixtures::cube_mesh(1.0);
        assert_eq!(m.vertices().len(), 8);
        let n = m.closest_point(&Point::new(2.0, 0.5, 0.5));
        assert!((n.distance - 1.0).abs() < 1e-15);
        assert!((n.point - Point::new(1.0, 0.5, 0.5)).norm() < 1e-15);
        assert_eq!(m.closest_point(&m.vertices()[3]).distance, 0.0);
        let s = 1.0 / 3f64.sqrt();
        for (v, n) in m.vertices().iter().zip(m.normals()) {
            let expect = v.coords.map(|c| if c > 0.5 { s } else { -s });
            assert!((n - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn closest_point_matches_brute_force() {
        let m = fixtures::icosphere(3, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let p = Point::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let d = m.closest_point(&p).distance;
            assert!((d - brute_force(&m, &p)).abs() <= 1e-12, "{p:?}");
        }
    }

    #[test]
    fn icosphere_normals_are_radial() {
        let m = fixtures::icosphere(3, 1.0);
        assert_eq!(m.triangles().len(), 1280);
        for (v, n) in m.vertices().iter().zip(m.normals()) {
            let angle = n.angle(&v.coords).to_degrees();
            assert!(angle < 1.0, "{angle}");
        }
    }

    #[test]
    fn grid_normals_point_up() {
        let m = fixtures::grid(5, 4, 1.0);
        for n in m.normals() {
            assert!((n - Vector::z()).norm() < 1e-15);
        }
    }

    #[test]
    fn isolated_vertex_rejected() {
        let v = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(5.0, 5.0, 5.0),
        ];
        let err = estimate_vertex_normals(&v, &[[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, Error::IsolatedVertex(3)));
        assert!(matches!(estimate_vertex_normals(&v, &[]), Err(Error::EmptyMesh)));
        // the cleaning constructor drops it instead
        assert_eq!(TriMesh::from_soup(v, vec![[0, 1, 2]]).unwrap().vertices().len(), 3);
    }

    #[test]
    fn welding_merges_duplicates() {
        let v = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(1.0, 0.0, 1e-12),
            Point::new(1.0, 1.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
        ];
        let m = TriMesh::from_soup(v, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        assert_eq!(m.vertices().len(), 4);
        assert_eq!(m.boundary_loops().len(), 1);
        assert_eq!(m.boundary_loops()[0].len(), 5);
    }

    #[test]
    fn filter_points_half_space() {
        let m = fixtures::icosphere(3, 1.0);
        let eps = 1e-6 * m.scale();
        let all = m.filter_points::<fn(&Point) -> f64>(&[]).unwrap();
        assert_eq!(all.len(), m.vertices().len());
        let fz: fn(&Point) -> f64 = |p| p.z;
        let fx: fn(&Point) -> f64 = |p| p.x;
        let upper = m.filter_points(&[fz]).unwrap();
        let expect = m.vertices().iter().filter(|p| p.z >= -eps).count();
        assert_eq!(upper.len(), expect);
        let both = m.filter_points(&[fz, fx]).unwrap();
        assert!(both.len() <= upper.len());
        assert!(matches!(
            m.filter_points(&[|p: &Point| p.z - 5.0]),
            Err(Error::EmptySelection)
        ));
    }
}
