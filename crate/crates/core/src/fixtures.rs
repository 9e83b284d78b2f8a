//! Synthetic models: meshes with known analytic shape and matching curve
//! networks. Used by the tests, the benchmarks and the `demo` command.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::geom::Point;
use crate::mesh::TriMesh;
use crate::network::{EdgeRecord, FaceRecord, NetworkFile, VertexRecord};

/// Subdivided icosahedron on a sphere of `radius` (20·4^level faces).
pub fn icosphere(level: u32, radius: f64) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<Point> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|c| Point::from(nalgebra::Vector3::new(c[0], c[1], c[2]).normalize()))
    .collect();
    let mut f: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, v: &mut Vec<Point>| {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = nalgebra::center(&v[a], &v[b]);
                v.push(Point::from(m.coords.normalize()));
                v.len() - 1
            })
        };
        let mut next = Vec::with_capacity(f.len() * 4);
        for [a, b, c] in f {
            let ab = mid(a, b, &mut v);
            let bc = mid(b, c, &mut v);
            let ca = mid(c, a, &mut v);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        f = next;
    }
    let v = v.into_iter().map(|p| p * radius).collect();
    TriMesh::new(v, f).expect("icosphere is valid")
}

/// Axis-aligned cube `[0, size]³`, 8 vertices and 12 outward triangles.
pub fn cube_mesh(size: f64) -> TriMesh {
    let v: Vec<Point> = (0..8)
        .map(|i| {
            Point::new(
                (i & 1) as f64 * size,
                ((i >> 1) & 1) as f64 * size,
                ((i >> 2) & 1) as f64 * size,
            )
        })
        .collect();
    let quads = [
        [0, 2, 3, 1], // z = 0
        [4, 5, 7, 6], // z = 1
        [0, 1, 5, 4], // y = 0
        [2, 6, 7, 3], // y = 1
        [0, 4, 6, 2], // x = 0
        [1, 3, 7, 5], // x = 1
    ];
    let f = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriMesh::new(v, f).expect("cube is valid")
}

/// Flat `nx × ny` grid over `[0, size]²` in the plane z = 0, normals +z.
pub fn grid(nx: usize, ny: usize, size: f64) -> TriMesh {
    height_field(nx, ny, size, |_, _| 0.0)
}

/// Grid over `[0, size]²` displaced to `z = h(x, y)`.
pub fn height_field(nx: usize, ny: usize, size: f64, h: impl Fn(f64, f64) -> f64) -> TriMesh {
    let mut v = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = size * i as f64 / nx as f64;
            let y = size * j as f64 / ny as f64;
            v.push(Point::new(x, y, h(x, y)));
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut f = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            f.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            f.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriMesh::new(v, f).expect("grid is valid")
}

/// Open cylinder around the z axis, `0 ≤ z ≤ height`, outward normals.
pub fn open_cylinder(radius: f64, height: f64, segments: usize, rings: usize) -> TriMesh {
    let mut v = Vec::new();
    for j in 0..=rings {
        let z = height * j as f64 / rings as f64;
        for k in 0..segments {
            let a = 2.0 * PI * k as f64 / segments as f64;
            v.push(Point::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let id = |k: usize, j: usize| j * segments + k % segments;
    let mut f = Vec::new();
    for j in 0..rings {
        for k in 0..segments {
            f.push([id(k, j), id(k + 1, j), id(k + 1, j + 1)]);
            f.push([id(k, j), id(k + 1, j + 1), id(k, j + 1)]);
        }
    }
    TriMesh::new(v, f).expect("cylinder is valid")
}

/// Upper half of the ellipsoid `x²/a² + y²/b² + z²/c² = 1`, open along the
/// equator `z = 0`. Latitude rings are spaced evenly in polar angle.
pub fn ellipsoid_cap(a: f64, b: f64, c: f64, rings: usize, segments: usize) -> TriMesh {
    let mut v = vec![Point::new(0.0, 0.0, c)];
    for j in 1..=rings {
        let theta = 0.5 * PI * j as f64 / rings as f64;
        // exact zero on the rim
        let z = if j == rings { 0.0 } else { c * theta.cos() };
        for k in 0..segments {
            let phi = 2.0 * PI * k as f64 / segments as f64;
            v.push(Point::new(a * theta.sin() * phi.cos(), b * theta.sin() * phi.sin(), z));
        }
    }
    let id = |k: usize, j: usize| 1 + (j - 1) * segments + k % segments;
    let mut f = Vec::new();
    for k in 0..segments {
        f.push([0, id(k, 1), id(k + 1, 1)]);
    }
    for j in 1..rings {
        for k in 0..segments {
            f.push([id(k, j), id(k, j + 1), id(k + 1, j + 1)]);
            f.push([id(k, j), id(k + 1, j + 1), id(k + 1, j)]);
        }
    }
    TriMesh::new(v, f).expect("ellipsoid cap is valid")
}

/// Network file from corner positions and face loops given as vertex
/// indices. Edges are numbered from 1 in order of first use.
pub fn network_from_loops(points: &[Point], loops: &[Vec<usize>]) -> NetworkFile {
    let mut edges: Vec<EdgeRecord> = Vec::new();
    let mut index: HashMap<(usize, usize), i64> = HashMap::new();
    let mut faces = Vec::with_capacity(loops.len());
    for (fi, l) in loops.iter().enumerate() {
        let mut signed = Vec::with_capacity(l.len());
        for k in 0..l.len() {
            let (a, b) = (l[k], l[(k + 1) % l.len()]);
            let id = *index.entry((a.min(b), a.max(b))).or_insert_with(|| {
                edges.push(EdgeRecord {
                    id: edges.len() as i64 + 1,
                    v: [a as i64 + 1, b as i64 + 1],
                });
                edges.len() as i64
            });
            let forward = edges[id as usize - 1].v[0] == a as i64 + 1;
            signed.push(if forward { id } else { -id });
        }
        faces.push(FaceRecord {
            id: fi as i64 + 1,
            loop_: signed,
        });
    }
    NetworkFile {
        vertices: points
            .iter()
            .enumerate()
            .map(|(i, p)| VertexRecord {
                id: i as i64 + 1,
                position: [p.x, p.y, p.z],
            })
            .collect(),
        edges,
        faces,
    }
}

/// Cube graph on the unit sphere: corners `(±1, ±1, ±1)/√3`, 12 edges and 6
/// outward quad faces. `perturb` moves the corner hints by a fixed pattern
/// of that magnitude to break symmetry.
pub fn cube_network(perturb: f64) -> NetworkFile {
    let points: Vec<Point> = (0..8)
        .map(|i| {
            let s = |bit: usize| if (i >> bit) & 1 == 1 { 1.0 } else { -1.0 };
            let k = i as f64;
            let jitter = nalgebra::Vector3::new((1.3 * k).sin(), (2.1 * k).cos(), (0.7 * k + 1.0).sin());
            let p = nalgebra::Vector3::new(s(0), s(1), s(2)) / 3f64.sqrt() + jitter * perturb;
            Point::from(p.normalize())
        })
        .collect();
    let loops = [
        vec![0, 2, 3, 1],
        vec![4, 5, 7, 6],
        vec![0, 1, 5, 4],
        vec![2, 6, 7, 3],
        vec![0, 4, 6, 2],
        vec![1, 3, 7, 5],
    ];
    network_from_loops(&points, &loops)
}

/// Three-face network on [`ellipsoid_cap`]: the pole, three rim corners at
/// azimuth 0°, 120° and 240°, three spokes and three rim arcs.
pub fn ellipsoid_network(a: f64, b: f64, c: f64) -> NetworkFile {
    let mut points = vec![Point::new(0.0, 0.0, c)];
    for k in 0..3 {
        let phi = 2.0 * PI * k as f64 / 3.0;
        points.push(Point::new(a * phi.cos(), b * phi.sin(), 0.0));
    }
    let loops = [vec![0, 1, 2], vec![0, 2, 3], vec![0, 3, 1]];
    network_from_loops(&points, &loops)
}

/// `n × n` quad network over [`grid`]-like meshes spanning `[0, size]²`.
pub fn grid_network(n: usize, size: f64) -> NetworkFile {
    let mut points = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            points.push(Point::new(size * i as f64 / n as f64, size * j as f64 / n as f64, 0.0));
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut loops = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            loops.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    network_from_loops(&points, &loops)
}
