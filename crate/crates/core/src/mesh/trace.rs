//! Zero-set tracing over the mesh and open-boundary extraction.

use std::collections::HashMap;

use super::{sub_chain, Polyline, TriMesh};
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::implicit::ImplicitSurface;

struct Chain {
    line: Polyline,
    closed: bool,
}

/// Intersection curve of `s` with the mesh, ordered from `a` to `b`.
///
/// Uses the distance-like evaluation of `s`, which shares its zero set with
/// the algebraic one.
pub fn trace_intersection(m: &TriMesh, s: &ImplicitSurface, a: &Point, b: &Point) -> Result<Polyline> {
    trace_field(m, |p| s.distance(p), a, b)
}

/// Zero-set curve of an arbitrary field over the mesh, from `a` to `b`.
///
/// Crossing points are linearly interpolated on mesh edges. Among the
/// connected chains the one whose closest points to `a` and `b` are nearest
/// wins; a runner-up within 10% of it is reported as ambiguous.
pub fn trace_field<F>(m: &TriMesh, f: F, a: &Point, b: &Point) -> Result<Polyline>
where
    F: Fn(&Point) -> f64,
{
    let chains = zero_chains(m, &f);
    if chains.is_empty() {
        return Err(Error::NoIntersection);
    }
    let scale = m.scale();
    let mut scored: Vec<(f64, usize, f64, f64)> = chains
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (da, sa) = c.line.project(a);
            let (db, sb) = c.line.project(b);
            (da + db, i, sa, sb)
        })
        .collect();
    scored.sort_by(|x, y| x.0.total_cmp(&y.0));
    let best = scored[0];
    let rivals = scored
        .iter()
        .filter(|s| s.0 <= 1.1 * best.0 + 1e-12 * scale)
        .count();
    if rivals > 1 {
        return Err(Error::AmbiguousChain { count: rivals });
    }
    let chain = &chains[best.1];
    let mut pts = sub_chain(&chain.line, chain.closed, best.2, best.3);
    let last = pts.len() - 1;
    pts[0] = *a;
    pts[last] = *b;
    let line = Polyline::with_tolerance(pts, 1e-12 * scale);
    if line.len() < 2 {
        return Err(Error::DegenerateSpan);
    }
    Ok(line)
}

fn zero_chains<F: Fn(&Point) -> f64>(m: &TriMesh, f: &F) -> Vec<Chain> {
    let verts = m.vertices();
    let values: Vec<f64> = verts.iter().map(f).collect();
    let positive = |i: usize| values[i] >= 0.0;

    // one node per sign-changing edge
    let mut node_of: HashMap<(usize, usize), usize> = HashMap::new();
    let mut points: Vec<Point> = Vec::new();
    let mut adjacency: Vec<Vec<usize>> = Vec::new();
    let mut node = |u: usize, v: usize, points: &mut Vec<Point>, adjacency: &mut Vec<Vec<usize>>| {
        let key = (u.min(v), u.max(v));
        *node_of.entry(key).or_insert_with(|| {
            let (fu, fv) = (values[key.0], values[key.1]);
            let t = fu / (fu - fv);
            points.push(verts[key.0] + (verts[key.1] - verts[key.0]) * t);
            adjacency.push(Vec::new());
            points.len() - 1
        })
    };
    for t in m.triangles() {
        let mut crossing = [0usize; 2];
        let mut k = 0;
        for e in 0..3 {
            let (u, v) = (t[e], t[(e + 1) % 3]);
            if positive(u) != positive(v) {
                crossing[k] = node(u, v, &mut points, &mut adjacency);
                k += 1;
            }
        }
        if k == 2 {
            adjacency[crossing[0]].push(crossing[1]);
            adjacency[crossing[1]].push(crossing[0]);
        }
    }

    let n = points.len();
    let mut visited = vec![false; n];
    let mut chains = Vec::new();
    let walk = |start: usize, visited: &mut Vec<bool>| -> (Vec<usize>, bool) {
        let mut order = vec![start];
        visited[start] = true;
        let mut cur = start;
        loop {
            let next = adjacency[cur].iter().copied().find(|&j| !visited[j]);
            match next {
                Some(j) => {
                    visited[j] = true;
                    order.push(j);
                    cur = j;
                }
                None => {
                    let closed = order.len() > 2 && adjacency[cur].contains(&start);
                    return (order, closed);
                }
            }
        }
    };
    // open chains start at degree-one nodes; the rest are loops
    let mut starts: Vec<usize> = (0..n).filter(|&i| adjacency[i].len() == 1).collect();
    starts.extend((0..n).filter(|&i| adjacency[i].len() != 1));
    for s in starts {
        if visited[s] {
            continue;
        }
        let (order, closed) = walk(s, &mut visited);
        let mut pts: Vec<Point> = order.iter().map(|&i| points[i]).collect();
        if closed {
            pts.push(pts[0]);
        }
        let line = Polyline::new(pts);
        if line.len() >= 2 {
            chains.push(Chain {
                closed: closed && line.len() > 3,
                line,
            });
        }
    }
    chains
}

/// Portion of the open mesh boundary between `a` and `b` (shorter arc).
pub fn boundary_polyline(m: &TriMesh, a: &Point, b: &Point) -> Result<Polyline> {
    let loops = m.boundary_loops();
    if loops.is_empty() {
        return Err(Error::ClosedMesh);
    }
    let scale = m.scale();
    if (a - b).norm() <= 1e-12 * scale {
        return Err(Error::DegenerateSpan);
    }
    let tol = 1e-6 * scale;
    let locate = |p: &Point| {
        loops
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let (d, s) = l.project(p);
                (d, i, s)
            })
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .expect("at least one loop")
    };
    let (da, la, sa) = locate(a);
    let (db, lb, sb) = locate(b);
    for d in [da, db] {
        if d > tol {
            return Err(Error::NotOnBoundary { distance: d });
        }
    }
    if la != lb {
        return Err(Error::NotOnBoundary {
            distance: (a - b).norm(),
        });
    }
    let mut pts = sub_chain(&loops[la], true, sa, sb);
    let last = pts.len() - 1;
    pts[0] = *a;
    pts[last] = *b;
    Ok(Polyline::with_tolerance(pts, 1e-12 * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::geom::Vector;
    use crate::implicit::Plane;
    use std::f64::consts::PI;

    fn plane(n: Vector, d: f64) -> ImplicitSurface {
        ImplicitSurface::Plane(Plane::new(n, d).unwrap())
    }

    #[test]
    fn great_half_circle_on_icosphere() {
        let m = fixtures::icosphere(3, 1.0);
        let a = m.closest_point(&Point::new(1.0, 0.0, 0.0)).point;
        let b = m.closest_point(&Point::new(-1.0, 0.0, 0.0)).point;
        let line = trace_intersection(&m, &plane(Vector::z(), 0.0), &a, &b).unwrap();
        assert!((line.length() - PI).abs() / PI < 0.02, "{}", line.length());
        assert_eq!(line.first(), Some(&a));
        assert_eq!(line.last(), Some(&b));
    }

    #[test]
    fn traced_points_lie_near_zero_set() {
        let m = fixtures::icosphere(3, 1.0);
        let s = plane(Vector::new(0.3, -0.5, 1.0), 0.2);
        let a = m.closest_point(&Point::new(1.0, 0.0, -0.2)).point;
        let b = m.closest_point(&Point::new(-1.0, 0.3, 0.3)).point;
        let line = trace_intersection(&m, &s, &a, &b).unwrap();
        let edge = 0.2;
        for p in &line.points()[1..line.len() - 1] {
            assert!(s.value(p).abs() <= 0.5 * edge);
        }
        for w in line.arclen().windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn missing_plane_gives_no_intersection() {
        let m = fixtures::icosphere(2, 1.0);
        let a = Point::new(1.0, 0.0, 0.0);
        let err = trace_intersection(&m, &plane(Vector::z(), -5.0), &a, &a).unwrap_err();
        assert!(matches!(err, Error::NoIntersection));
    }

    #[test]
    fn straight_line_on_grid() {
        let m = fixtures::grid(8, 8, 1.0);
        let a = Point::new(0.5, 0.0, 0.0);
        let b = Point::new(0.5, 1.0, 0.0);
        let line = trace_intersection(&m, &plane(Vector::x(), -0.5), &a, &b).unwrap();
        for p in line.points() {
            assert!((p.x - 0.5).abs() < 1e-12 && p.z.abs() < 1e-15);
        }
        assert!((line.length() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_parallel_chains_are_ambiguous() {
        // cylinder cut by a plane through its axis: two straight chains
        let m = fixtures::open_cylinder(1.0, 2.0, 32, 4);
        let a = Point::new(0.0, 0.0, 0.0);
        let b = Point::new(0.0, 0.0, 2.0);
        let err = trace_intersection(&m, &plane(Vector::x(), 0.0), &a, &b).unwrap_err();
        assert!(matches!(err, Error::AmbiguousChain { count: 2 }));
    }

    #[test]
    fn cylinder_rim_arc() {
        let m = fixtures::open_cylinder(1.0, 2.0, 64, 4);
        let a = Point::new(1.0, 0.0, 2.0);
        let q = 2.0 * PI * 16.0 / 64.0;
        let b = Point::new(q.cos(), q.sin(), 2.0);
        let line = boundary_polyline(&m, &a, &b).unwrap();
        // chord polygon with 16 segments of a unit circle
        let expect = 16.0 * 2.0 * (PI / 64.0).sin();
        assert!((line.length() - expect).abs() < 1e-12);
        assert!(line.points().iter().all(|p| (p.z - 2.0).abs() < 1e-15));
        assert_eq!(line.first(), Some(&a));
        let back = boundary_polyline(&m, &b, &a).unwrap();
        assert!((back.length() - line.length()).abs() < 1e-12);
    }

    #[test]
    fn boundary_errors() {
        let m = fixtures::open_cylinder(1.0, 2.0, 16, 2);
        let a = Point::new(1.0, 0.0, 0.0);
        assert!(matches!(boundary_polyline(&m, &a, &a), Err(Error::DegenerateSpan)));
        assert!(matches!(
            boundary_polyline(&m, &a, &Point::new(1.0, 0.0, 1.0)),
            Err(Error::NotOnBoundary { .. })
        ));
        let sphere = fixtures::icosphere(1, 1.0);
        assert!(matches!(
            boundary_polyline(&sphere, &a, &Point::new(0.0, 1.0, 0.0)),
            Err(Error::ClosedMesh)
        ));
    }
}
