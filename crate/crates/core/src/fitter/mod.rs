//! Assembles one I-patch per network face and optimizes its weights.
//!
//! The center point `c` anchors the default weights and is interpolated by
//! every candidate: `w₀` is re-derived from the side weights so that the
//! faithful field vanishes at `c`. Side weights are optimized in log space
//! against the mesh vertices inside the patch's bounding volume.

pub mod nelder_mead;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Aabb, Point};
use crate::implicit::{faithful_from_components, IPatchDef, Side};
use crate::mesh::{Polyline, TriMesh};
use crate::network::{CurveNetwork, FaceId};
use crate::ribbon::RibbonKind;
use nelder_mead::{nelder_mead, NmOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Largest allowed ratio between the side terms at the center.
    pub omega: f64,
    pub max_eval: usize,
    pub tol_f: f64,
    /// Off: keep the default weights.
    pub optimize: bool,
    /// Fail with `AllCandidatesInfeasible` instead of falling back to the
    /// weight-deviation rule when the defaults violate the term-ratio bound.
    pub strict_ratio: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            omega: 5.0,
            max_eval: 2000,
            tol_f: 1e-10,
            optimize: true,
            strict_ratio: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega >= 1.0) {
            return Err(Error::InvalidPatch(format!("omega {} must be at least 1", self.omega)));
        }
        if !(self.tol_f >= 0.0) {
            return Err(Error::InvalidPatch(format!("tol_f {}", self.tol_f)));
        }
        Ok(())
    }
}

/// Which ratio bound constrained the optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioRule {
    /// `|wᵢRᵢ(c)/Bᵢ²(c)|` terms within a factor ω of each other.
    Terms,
    /// Each `wᵢ/wᵢ⁰` within a factor ω of the others; used when the default
    /// terms already violate the term bound.
    Deviation,
    /// No optimization took place.
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedPatch {
    pub face_id: i64,
    pub def: IPatchDef,
    pub center: Point,
    #[serde(default)]
    pub points: Vec<Point>,
    /// RMS and max of the faithful distances at `points` (model units).
    pub rms: f64,
    pub max_dev: f64,
    /// RMS with the default weights.
    pub default_rms: f64,
    pub rule: RatioRule,
    pub evals: usize,
    /// Boundary polylines and fitted points, expanded by 10%.
    pub bbox: Aabb,
    pub ribbon_kinds: Vec<RibbonKind>,
}

/// Arc-length weighted centroid of the polylines, projected onto the mesh.
pub fn center_point(polylines: &[&Polyline], m: &TriMesh) -> Point {
    let mut sum = nalgebra::Vector3::zeros();
    let mut total = 0.0;
    for line in polylines {
        for w in line.points().windows(2) {
            let len = (w[1] - w[0]).norm();
            sum += (w[0].coords + w[1].coords) * (0.5 * len);
            total += len;
        }
    }
    let centroid = if total > 0.0 {
        Point::from(sum / total)
    } else {
        let pts: Vec<&Point> = polylines.iter().flat_map(|l| l.points()).collect();
        let n = pts.len().max(1) as f64;
        Point::from(pts.iter().fold(nalgebra::Vector3::zeros(), |a, p| a + p.coords) / n)
    };
    m.closest_point(&centroid).point
}

/// Uniform-contribution weights: `wᵢ = Bᵢ(c)²`, `w₀ = Σ Rᵢ(c)`.
pub fn default_weights(sides: &[Side], c: &Point, scale: f64) -> Result<Vec<f64>> {
    let mut w = vec![0.0; sides.len() + 1];
    for (i, s) in sides.iter().enumerate() {
        let b = s.bounding_value(c);
        if !(b.abs() >= 1e-9 * scale) {
            return Err(Error::CenterOnBounding { side: i });
        }
        w[i + 1] = b * b;
        w[0] += s.ribbon_value(c);
    }
    Ok(w)
}

/// Sum of squared faithful distances.
pub fn objective(def: &IPatchDef, points: &[Point]) -> Result<f64> {
    points.iter().try_fold(0.0, |acc, p| Ok(acc + def.faithful(p)?.powi(2)))
}

/// `w₀` that puts `c` on the zero set for the given side weights.
fn interpolating_w0(rc: &[f64], bc: &[f64], w: &[f64]) -> f64 {
    (0..rc.len()).map(|i| w[i] * rc[i] / (bc[i] * bc[i])).sum()
}

/// Largest ratio between the absolute side terms at the center.
pub fn term_ratio(def: &IPatchDef, c: &Point) -> f64 {
    let comps = def.components(c);
    let terms: Vec<f64> = (0..def.len())
        .map(|i| (def.weights()[i + 1] * comps.ribbons[i] / comps.boundings[i].powi(2)).abs())
        .collect();
    spread(&terms)
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().fold(0.0f64, |m, x| m.max(*x));
    let min = v.iter().fold(f64::INFINITY, |m, x| m.min(*x));
    if max == 0.0 {
        1.0
    } else {
        max / min
    }
}

/// Component values at the fitting points, stored side-major per point.
struct Cache {
    n: usize,
    r: Vec<f64>,
    b: Vec<f64>,
}

impl Cache {
    fn new(sides: &[Side], points: &[Point]) -> Self {
        let n = sides.len();
        let mut r = Vec::with_capacity(n * points.len());
        let mut b = Vec::with_capacity(n * points.len());
        for p in points {
            for s in sides {
                r.push(s.ribbon_value(p));
                b.push(s.bounding_value(p));
            }
        }
        Cache { n, r, b }
    }

    fn sum_squares(&self, w: &[f64], eps_b: f64, floor: f64) -> Result<f64> {
        let mut sum = 0.0;
        for (r, b) in self.r.chunks_exact(self.n).zip(self.b.chunks_exact(self.n)) {
            sum += faithful_from_components(r, b, w, eps_b, floor)?.powi(2);
        }
        Ok(sum)
    }
}

/// Points where at least two boundings vanish make the faithful form
/// undefined for every weight choice.
fn well_defined(sides: &[Side], p: &Point, eps: f64) -> bool {
    sides.iter().filter(|s| s.bounding_value(p).abs() < eps).count() < 2
}

/// Optimizes the side weights of the patch `(sides, c)` against `points`.
pub fn optimize_patch(sides: Vec<Side>, points: &[Point], c: &Point, scale: f64, cfg: &FitConfig) -> Result<FittedPatch> {
    cfg.validate()?;
    let n = sides.len();
    let w_default = default_weights(&sides, c, scale)?;
    let def = IPatchDef::new(sides, w_default.clone(), scale)?;
    let (eps_b, floor) = (def.eps_bounding(), def.denominator_floor());
    let points: Vec<Point> = points
        .iter()
        .filter(|p| well_defined(def.sides(), p, eps_b))
        .copied()
        .collect();
    let cache = Cache::new(def.sides(), &points);
    let comps = def.components(c);
    let (rc, bc) = (comps.ribbons, comps.boundings);

    let default_sum = cache.sum_squares(&w_default, eps_b, floor)?;
    let default_ratio = term_ratio(&def, c);
    let rule = if !cfg.optimize || points.is_empty() {
        RatioRule::None
    } else if default_ratio <= cfg.omega * (1.0 + 1e-12) {
        RatioRule::Terms
    } else if cfg.strict_ratio {
        return Err(Error::AllCandidatesInfeasible {
            ratio: default_ratio,
            omega: cfg.omega,
        });
    } else {
        RatioRule::Deviation
    };

    let assemble = |x: &[f64]| -> Vec<f64> {
        let side_w: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let mut w = Vec::with_capacity(n + 1);
        w.push(interpolating_w0(&rc, &bc, &side_w));
        w.extend(side_w);
        w
    };
    let feasible = |w: &[f64]| -> bool {
        match rule {
            RatioRule::Terms => {
                let terms: Vec<f64> = (0..n).map(|i| (w[i + 1] * rc[i] / (bc[i] * bc[i])).abs()).collect();
                spread(&terms) <= cfg.omega * (1.0 + 1e-12)
            }
            RatioRule::Deviation => {
                let dev: Vec<f64> = (0..n).map(|i| w[i + 1] / w_default[i + 1]).collect();
                spread(&dev) <= cfg.omega * (1.0 + 1e-12)
            }
            RatioRule::None => true,
        }
    };

    let x0: Vec<f64> = w_default[1..].iter().map(|w| w.ln()).collect();
    let (weights, evals) = if rule == RatioRule::None {
        (w_default.clone(), 0)
    } else {
        let f = |x: &[f64]| {
            let w = assemble(x);
            if !feasible(&w) {
                return f64::INFINITY;
            }
            cache.sum_squares(&w, eps_b, floor).unwrap_or(f64::INFINITY)
        };
        let opts = NmOptions {
            max_eval: cfg.max_eval,
            tol_f: cfg.tol_f,
        };
        let r = nelder_mead(f, &x0, &opts)?;
        // keep the defaults unless strictly better
        if r.f < default_sum {
            (assemble(&r.x), r.evals)
        } else {
            (w_default.clone(), r.evals)
        }
    };
    let def = def.with_weights(weights)?;

    let count = points.len().max(1) as f64;
    let mut sum = 0.0;
    let mut max_dev = 0.0f64;
    for (r, b) in cache.r.chunks_exact(n).zip(cache.b.chunks_exact(n)) {
        let d = faithful_from_components(r, b, def.weights(), eps_b, floor)?;
        sum += d * d;
        max_dev = max_dev.max(d.abs());
    }
    let mut bbox = Aabb::from_points(points.iter());
    bbox.include(c);
    Ok(FittedPatch {
        face_id: 0,
        def,
        center: *c,
        rms: (sum / count).sqrt(),
        max_dev,
        default_rms: (default_sum / count).sqrt(),
        rule,
        evals,
        bbox,
        ribbon_kinds: Vec::new(),
        points,
    })
}

/// Sides of face `f` with each bounding oriented positive at `c`.
fn face_sides(net: &CurveNetwork, f: FaceId, c: &Point) -> Result<(Vec<Side>, Vec<RibbonKind>)> {
    let mut sides = Vec::new();
    let mut kinds = Vec::new();
    for s in &net.face(f).sides {
        let edge = net.edge(s.edge);
        let ribbon = edge.ribbon.as_ref().ok_or_else(|| {
            Error::InvalidPatch(format!("edge {} has no ribbon", edge.id))
        })?;
        let bounding = edge.bounding.clone().unwrap_or_else(|| ribbon.bounding.clone());
        let flip = bounding.distance(c) < 0.0;
        sides.push(Side::new(Arc::clone(&ribbon.primary), bounding, flip));
        kinds.push(ribbon.kind);
    }
    Ok((sides, kinds))
}

/// Boundary polylines of a face in loop order.
pub fn face_polylines(net: &CurveNetwork, f: FaceId) -> Result<Vec<&Polyline>> {
    net.face(f)
        .sides
        .iter()
        .map(|s| {
            let e = net.edge(s.edge);
            e.polyline
                .as_ref()
                .ok_or_else(|| Error::InvalidPatch(format!("edge {} has no polyline", e.id)))
        })
        .collect()
}

/// Fits the patch of one face. Ribbons must be built.
pub fn fit_face(net: &CurveNetwork, f: FaceId, m: &TriMesh, cfg: &FitConfig) -> Result<FittedPatch> {
    let lines = face_polylines(net, f)?;
    let c = center_point(&lines, m);
    let (sides, kinds) = face_sides(net, f, &c)?;
    let corners: Vec<Point> = net.face_corners(f).iter().map(|&v| net.vertex(v).position).collect();
    let scale = Aabb::from_points(corners.iter()).diagonal().max(1e-12 * m.scale());

    let reach = lines
        .iter()
        .flat_map(|l| l.points())
        .map(|p| (p - c).norm())
        .fold(0.0f64, f64::max);
    let inside: Vec<_> = sides
        .iter()
        .map(|s| {
            let s = s.clone();
            move |p: &Point| s.bounding_value(p)
        })
        .collect();
    // Facet samples cover the triangles the deviation is measured against.
    let eps = 1e-6 * m.scale();
    let mut points = match m.filter_points(&inside) {
        Ok(pts) => pts,
        Err(Error::EmptySelection) => Vec::new(),
        Err(e) => return Err(e),
    };
    points.extend(m.facet_samples().into_iter().filter(|p| inside.iter().all(|b| b(p) >= -eps)));
    points.retain(|p| (p - c).norm() <= 1.5 * reach);

    let mut fp = optimize_patch(sides, &points, &c, scale, cfg)?;
    fp.face_id = net.face(f).id;
    fp.ribbon_kinds = kinds;
    let mut bbox = fp.bbox;
    for l in &lines {
        for p in l.points() {
            bbox.include(p);
        }
    }
    fp.bbox = bbox.expanded(0.1);
    Ok(fp)
}

/// Fits every active face concurrently, in face order.
pub fn fit_network(net: &CurveNetwork, m: &TriMesh, cfg: &FitConfig) -> Result<Vec<FittedPatch>> {
    let faces: Vec<FaceId> = net.active_faces().collect();
    faces.par_iter().map(|&f| fit_face(net, f, m, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::implicit::{ImplicitSurface, Plane};
    use crate::ribbon::{build_ribbons, RibbonOptions};

    fn plane(n: [f64; 3], d: f64) -> Arc<ImplicitSurface> {
        Arc::new(ImplicitSurface::Plane(
            Plane::new(nalgebra::Vector3::new(n[0], n[1], n[2]), d).unwrap(),
        ))
    }

    /// Square patch over [-1, 1]² with tilted side ribbons.
    fn square_sides() -> Vec<Side> {
        let mut sides = Vec::new();
        for k in 0..4 {
            let a = std::f64::consts::FRAC_PI_2 * k as f64;
            let (cx, cy) = (a.cos(), a.sin());
            // ribbon tilted outward and down, bounding x·cos + y·sin <= 1
            let r = plane([0.3 * cx, 0.3 * cy, 1.0], -0.3);
            let b = plane([-cx, -cy, 0.0], 1.0);
            sides.push(Side::new(r, b, false));
        }
        sides
    }

    #[test]
    fn default_weights_unit_boundings() {
        let sides = square_sides();
        let c = Point::new(0.0, 0.0, 0.0);
        let w = default_weights(&sides, &c, 2.0).unwrap();
        assert!(w[1..].iter().all(|&x| (x - 1.0).abs() < 1e-15));
        let sum_r: f64 = sides.iter().map(|s| s.ribbon_value(&c)).sum();
        assert!((w[0] - sum_r).abs() < 1e-15);
        let def = IPatchDef::new(sides, w, 2.0).unwrap();
        assert!(def.faithful(&c).unwrap().abs() < 1e-12);
    }

    #[test]
    fn scaled_boundings_scale_weights() {
        let sides = square_sides();
        let c = Point::new(0.2, -0.1, 0.05);
        let w = default_weights(&sides, &c, 2.0).unwrap();
        let def = IPatchDef::new(sides.clone(), w.clone(), 2.0).unwrap();
        // substitute B -> 2B: defaults become 4 w_i with w0 unchanged
        let mut w2 = vec![w[0]];
        w2.extend(sides.iter().map(|s| (2.0 * s.bounding_value(&c)).powi(2)));
        for i in 1..5 {
            assert!((w2[i] - 4.0 * w[i]).abs() <= 1e-14 * w2[i]);
        }
        for p in [c, Point::new(0.5, 0.3, 0.2), Point::new(-0.7, 0.1, -0.4)] {
            let comps = def.components(&p);
            let b2: Vec<f64> = comps.boundings.iter().map(|b| 2.0 * b).collect();
            let doubled = faithful_from_components(&comps.ribbons, &b2, &w2, 0.0, 0.0).unwrap();
            let base = def.faithful(&p).unwrap();
            assert!((doubled - base).abs() <= 1e-14 * base.abs().max(1.0));
        }
        assert!(matches!(
            default_weights(&sides, &Point::new(1.0, 0.0, 0.0), 2.0),
            Err(Error::CenterOnBounding { side: 0 })
        ));
    }

    #[test]
    fn objective_examples() {
        let sides = square_sides();
        let c = Point::origin();
        let w = default_weights(&sides, &c, 2.0).unwrap();
        let def = IPatchDef::new(sides, w.clone(), 2.0).unwrap();
        let on: Vec<Point> = [(0.1, 0.2), (-0.3, 0.4), (0.5, -0.5)]
            .iter()
            .map(|&(x, y)| {
                // walk along z to the zero set
                let mut p = Point::new(x, y, 0.0);
                for _ in 0..50 {
                    let v = def.faithful(&p).unwrap();
                    let g = def.faithful_gradient(&p).unwrap();
                    p.z -= v / g.z;
                }
                p
            })
            .collect();
        assert!(objective(&def, &on).unwrap() < 1e-24);
        let q = Point::new(0.1, 0.1, 0.7);
        let d = def.faithful(&q).unwrap();
        assert!((objective(&def, &[q]).unwrap() - d * d).abs() < 1e-15);
        let doubled = def.with_weights(w.iter().map(|x| 2.0 * x).collect()).unwrap();
        let pts = [q, Point::new(-0.4, 0.2, -0.3)];
        let (a, b) = (objective(&def, &pts).unwrap(), objective(&doubled, &pts).unwrap());
        assert!((a - b).abs() <= 1e-14 * a);
    }

    #[test]
    fn points_on_default_patch_keep_defaults() {
        let sides = square_sides();
        let c = Point::origin();
        let w = default_weights(&sides, &c, 2.0).unwrap();
        let def = IPatchDef::new(sides.clone(), w.clone(), 2.0).unwrap();
        let mut pts = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                let mut p = Point::new(-0.8 + 0.4 * i as f64, -0.8 + 0.4 * j as f64, 0.0);
                for _ in 0..60 {
                    let v = def.faithful(&p).unwrap();
                    p.z -= v / def.faithful_gradient(&p).unwrap().z;
                }
                pts.push(p);
            }
        }
        let fp = optimize_patch(sides, &pts, &c, 2.0, &FitConfig::default()).unwrap();
        assert!(fp.rms < 1e-12);
        assert_eq!(fp.rule, RatioRule::Terms);
        for (a, b) in fp.def.weights().iter().zip(&w) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn constrained_optimum_respects_ratio_and_interpolates() {
        let sides = square_sides();
        let c = Point::new(0.0, 0.0, 0.0);
        // data from a bumpier surface than the default
        let pts: Vec<Point> = (0..60)
            .map(|k| {
                let t = k as f64 * 0.37;
                let (x, y) = (0.8 * t.sin(), 0.8 * (1.3 * t).cos());
                Point::new(x, y, 0.2 * (1.0 - x * x) * (1.0 - y * y) + 0.1 * x)
            })
            .collect();
        let cfg = FitConfig::default();
        let fp = optimize_patch(sides, &pts, &c, 2.0, &cfg).unwrap();
        assert!(fp.rms <= fp.default_rms);
        assert!(fp.def.faithful(&c).unwrap().abs() <= 1e-8 * 2.0);
        match fp.rule {
            RatioRule::Terms => assert!(term_ratio(&fp.def, &c) <= cfg.omega * (1.0 + 1e-9)),
            other => panic!("unexpected rule {other:?}"),
        }
        // argzero invariance of the returned weights
        let k = 3.7;
        let scaled = fp.def.with_weights(fp.def.weights().iter().map(|w| k * w).collect()).unwrap();
        for p in &pts {
            let (a, b) = (fp.def.faithful(p).unwrap(), scaled.faithful(p).unwrap());
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn strict_ratio_reports_infeasible_defaults() {
        let mut sides = square_sides();
        // ribbon values at the center differ by far more than omega
        sides[0].ribbon = plane([0.0, 0.0, 1.0], -0.001);
        let cfg = FitConfig {
            strict_ratio: true,
            ..FitConfig::default()
        };
        let pts = [Point::new(0.1, 0.1, 0.2)];
        assert!(matches!(
            optimize_patch(sides.clone(), &pts, &Point::origin(), 2.0, &cfg),
            Err(Error::AllCandidatesInfeasible { .. })
        ));
        let fp = optimize_patch(sides, &pts, &Point::origin(), 2.0, &FitConfig::default()).unwrap();
        assert_eq!(fp.rule, RatioRule::Deviation);
        let dev: Vec<f64> = (1..5).map(|i| fp.def.weights()[i] / 1.0).collect();
        assert!(spread(&dev) <= 5.0 * (1.0 + 1e-9));
    }

    #[test]
    fn square_center_on_plane() {
        let m = fixtures::grid(8, 8, 2.0);
        let net = CurveNetwork::from_file(&fixtures::grid_network(1, 2.0), &m).unwrap();
        let pts: Vec<Vec<Point>> = net
            .face(0)
            .sides
            .iter()
            .map(|s| {
                let [a, b] = net.edge(s.edge).v;
                let (pa, pb) = (net.vertex(a).position, net.vertex(b).position);
                (0..=4).map(|i| pa + (pb - pa) * (i as f64 / 4.0)).collect()
            })
            .collect();
        let lines: Vec<Polyline> = pts.into_iter().map(Polyline::new).collect();
        let refs: Vec<&Polyline> = lines.iter().collect();
        let c = center_point(&refs, &m);
        assert!((c - Point::new(1.0, 1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn cube_face_center_projects_to_sphere() {
        let m = fixtures::icosphere(3, 1.0);
        let mut net = CurveNetwork::from_file(&fixtures::cube_network(0.0), &m).unwrap();
        build_ribbons(&mut net, &m, &RibbonOptions::default()).unwrap();
        for f in net.active_faces().collect::<Vec<_>>() {
            let lines = face_polylines(&net, f).unwrap();
            let c = center_point(&lines, &m);
            // projection oracle: the point lies on the mesh, whose vertices are on the sphere
            assert!(m.closest_point(&c).distance < 1e-12);
            assert!((c.coords.norm() - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn sphere_patches_improve_with_optimization() {
        let m = fixtures::icosphere(3, 1.0);
        // symmetric faces leave only the scale-invariant weight direction
        let mut net = CurveNetwork::from_file(&fixtures::cube_network(0.15), &m).unwrap();
        build_ribbons(&mut net, &m, &RibbonOptions::default()).unwrap();
        let fitted = fit_network(&net, &m, &FitConfig::default()).unwrap();
        assert_eq!(fitted.len(), 6);
        let (mut opt, mut def) = (0.0, 0.0);
        for fp in &fitted {
            assert!(fp.rms <= fp.default_rms);
            assert!(fp.def.faithful(&fp.center).unwrap().abs() <= 1e-8 * fp.def.scale());
            assert!(!fp.points.is_empty());
            opt += fp.rms;
            def += fp.default_rms;
        }
        assert!(opt <= 0.95 * def, "optimized {opt} vs default {def}");
    }
}
