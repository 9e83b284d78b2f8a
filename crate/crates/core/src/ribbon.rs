//! Ribbon and bounding surfaces for network edges.
//!
//! A ribbon is the surface a patch side must meet with tangent continuity:
//! it interpolates the two corner points and is tangent to the corner
//! planes there. Two families are fitted to the traced edge polyline, a
//! one-parameter Liming pencil and a two-weight I-loft, and the better fit
//! wins. Corner data that is exactly coplanar yields the plane itself.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitter::nelder_mead::{nelder_mead, NmOptions};
use crate::geom::{normalize, Point, Vector};
use crate::implicit::{ILoft, ImplicitSurface, LimingSurface, Plane};
use crate::mesh::{boundary_polyline, trace_intersection, Polyline, TriMesh};
use crate::network::{CurveNetwork, EdgeId, EdgeKind};

const LAMBDA_MIN: f64 = 0.01;
const LAMBDA_MAX: f64 = 0.99;

/// Corner points and unit normals of an edge, in edge direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corners {
    pub p1: Point,
    pub n1: Vector,
    pub p2: Point,
    pub n2: Vector,
}

impl Corners {
    pub fn new(p1: Point, n1: Vector, p2: Point, n2: Vector) -> Self {
        Corners { p1, n1, p2, n2 }
    }

    pub fn chord(&self) -> f64 {
        (self.p2 - self.p1).norm()
    }

    fn tangent_planes(&self) -> Result<(Plane, Plane)> {
        let a = Plane::through(&self.p1, &self.n1).ok_or(Error::DegenerateNormal)?;
        let b = Plane::through(&self.p2, &self.n2).ok_or(Error::DegenerateNormal)?;
        Ok((a, b))
    }

    /// Corner tangent planes coincide (within rounding).
    fn coplanar(&self) -> bool {
        let tol = 1e-9 * self.chord().max(1e-300);
        self.n1.dot(&self.n2) >= 1.0 - 1e-12
            && self.n1.dot(&(self.p2 - self.p1)).abs() <= tol
            && self.n2.dot(&(self.p2 - self.p1)).abs() <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RibbonKind {
    Plane,
    Liming,
    Iloft,
}

/// Fitted ribbon of one edge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ribbon {
    pub primary: Arc<ImplicitSurface>,
    pub bounding: Arc<ImplicitSurface>,
    pub corners: Corners,
    pub target: Polyline,
    /// RMS distance of the target samples to the ribbon (model units).
    pub fit_error: f64,
    pub kind: RibbonKind,
}

/// How bounding surfaces of network edges are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundingMode {
    /// Averaged-normal plane through the corners everywhere.
    Planar,
    /// Plane through the corners and the mesh point above the chord midpoint.
    Midpoint,
    /// Planes inside, I-loft boundings along curved open mesh boundaries.
    #[default]
    Curved,
}

/// Which ribbon families may be used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RibbonMode {
    /// Best of Liming and I-loft.
    #[default]
    Auto,
    /// I-lofts only (every patch stays offsettable).
    Iloft,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RibbonOptions {
    pub bounding: BoundingMode,
    pub mode: RibbonMode,
}

/// Plane through both corners whose normal is the averaged corner normal
/// made orthogonal to the chord.
pub fn cutting_plane(p1: &Point, n1: &Vector, p2: &Point, n2: &Vector) -> Result<Plane> {
    let u = normalize(&(p2 - p1), 0.0).ok_or(Error::DegenerateNormal)?;
    let n12 = (n1 + n2) * 0.5;
    let n = n12 - u * n12.dot(&u);
    if n.norm() < 1e-9 {
        return Err(Error::DegenerateNormal);
    }
    Plane::through(p1, &n).ok_or(Error::DegenerateNormal)
}

/// Plane through both corners containing the averaged corner normal, or,
/// with `through`, the plane through the corners and that point (oriented
/// like the default one when it exists).
pub fn bounding_plane(
    p1: &Point,
    n1: &Vector,
    p2: &Point,
    n2: &Vector,
    through: Option<&Point>,
) -> Result<Plane> {
    let chord = p2 - p1;
    let len = chord.norm();
    if len == 0.0 {
        return Err(Error::DegenerateNormal);
    }
    let n12 = (n1 + n2) * 0.5;
    let nb = n12.cross(&chord);
    let default_ok = nb.norm() >= 1e-9 * len;
    let Some(q) = through else {
        if !default_ok {
            return Err(Error::DegenerateNormal);
        }
        return Plane::through(p1, &nb).ok_or(Error::DegenerateNormal);
    };
    let d = q - p1;
    let mut nt = chord.cross(&d);
    if nt.norm() <= 1e-12 * len * d.norm().max(len) {
        return Err(Error::CollinearThrough);
    }
    if default_ok && nt.dot(&nb) < 0.0 {
        nt = -nt;
    }
    Plane::through(p1, &nt).ok_or(Error::CollinearThrough)
}

/// Points of the target used as fitting samples: its interior vertices, or
/// evenly spaced points when the polyline has few vertices.
pub fn target_samples(target: &Polyline) -> Vec<Point> {
    let pts = target.points();
    if pts.len() >= 10 {
        return pts[1..pts.len() - 1].to_vec();
    }
    let mut s = target.resample(17);
    s.pop();
    s.remove(0);
    s
}

fn rms(residuals: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = residuals.fold((0.0, 0usize), |(s, n), r| (s + r * r, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

fn liming_for(c: &Corners, lambda: f64) -> Result<LimingSurface> {
    let (pi1, pi2) = c.tangent_planes()?;
    let cut = cutting_plane(&c.p1, &c.n1, &c.p2, &c.n2)?;
    Ok(LimingSurface::new(pi1, pi2, cut, lambda, &c.p1))
}

fn liming_rms(l: &LimingSurface, samples: &[Point], floor: f64) -> f64 {
    rms(samples.iter().map(|p| l.ray_distance(p, floor)))
}

/// Golden-section search for λ followed by a Gauss–Newton polish. Returns
/// the surface and its RMS normalized distance to the samples.
fn best_liming(c: &Corners, samples: &[Point]) -> Result<(LimingSurface, f64)> {
    let base = liming_for(c, 0.5)?;
    let floor = 1e-12 * c.chord();
    let at = |lambda: f64| LimingSurface { lambda, ..base.clone() };
    let cost = |lambda: f64| liming_rms(&at(lambda), samples, floor);

    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (LAMBDA_MIN, LAMBDA_MAX);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    while b - a > 1e-6 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = cost(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = cost(x2);
        }
    }
    let mut lambda = 0.5 * (a + b);
    let mut best = cost(lambda);
    for edge in [LAMBDA_MIN, LAMBDA_MAX] {
        let v = cost(edge);
        if v < best {
            best = v;
            lambda = edge;
        }
    }

    // Gauss-Newton on the residual vector
    let h = 1e-7;
    for _ in 0..20 {
        let (lo, hi) = ((lambda - h).max(LAMBDA_MIN), (lambda + h).min(LAMBDA_MAX));
        let (sl, sh, s0) = (at(lo), at(hi), at(lambda));
        let mut num = 0.0;
        let mut den = 0.0;
        for p in samples {
            let r = s0.ray_distance(p, floor);
            let dr = (sh.ray_distance(p, floor) - sl.ray_distance(p, floor)) / (hi - lo);
            num += r * dr;
            den += dr * dr;
        }
        if den <= 0.0 {
            break;
        }
        let next = (lambda - num / den).clamp(LAMBDA_MIN, LAMBDA_MAX);
        let v = cost(next);
        if !(v < best) {
            break;
        }
        best = v;
        lambda = next;
    }
    Ok((at(lambda), best))
}

/// Best Liming ribbon for the target. Fails with `InfeasibleLiming` when
/// its error exceeds ten times that of the best I-loft.
pub fn fit_liming(c: &Corners, target: &Polyline) -> Result<(LimingSurface, f64)> {
    let (_, iloft_rms) = fit_iloft(c, target)?;
    fit_liming_against(c, target, iloft_rms)
}

fn fit_liming_against(c: &Corners, target: &Polyline, iloft_rms: f64) -> Result<(LimingSurface, f64)> {
    let samples = target_samples(target);
    let (l, err) = best_liming(c, &samples)?;
    if err > 10.0 * iloft_rms.max(1e-12 * c.chord()) {
        return Err(Error::InfeasibleLiming {
            liming_rms: err,
            iloft_rms,
        });
    }
    Ok((l, err))
}

/// Local bounding planes of an I-loft: through each corner, normal along
/// the chord projected into that corner's tangent plane, positive toward
/// the other corner.
fn iloft_boundings(c: &Corners) -> Result<(Plane, Plane)> {
    let local = |p: &Point, n: &Vector, other: &Point| {
        let d = other - p;
        let t = d - n * n.dot(&d);
        if t.norm() < 1e-9 * d.norm() {
            return Err(Error::DegenerateNormal);
        }
        Plane::through(p, &t).ok_or(Error::DegenerateNormal)
    };
    Ok((local(&c.p1, &c.n1, &c.p2)?, local(&c.p2, &c.n2, &c.p1)?))
}

/// I-loft with uniform contributions at `m`: both terms `wᵢ/b̃ᵢ(m)²` equal
/// and the faithful value zero there.
pub fn default_iloft(c: &Corners, m: &Point) -> Result<ILoft> {
    let (pi1, pi2) = c.tangent_planes()?;
    let (b1, b2) = iloft_boundings(c)?;
    let s = pi1.value(m) + pi2.value(m);
    let floor = 1e-12 * c.chord();
    let s = if s.abs() < floor {
        if s < 0.0 {
            -floor
        } else {
            floor
        }
    } else {
        s
    };
    let alpha = 1.0 / s;
    Ok(ILoft {
        pi1,
        pi2,
        b1,
        b2,
        w1: alpha * b1.value(m).powi(2),
        w2: alpha * b2.value(m).powi(2),
    })
}

/// I-loft weights minimizing the squared faithful distances to the target,
/// optimized in log space with the sign of the default weights kept.
pub fn fit_iloft(c: &Corners, target: &Polyline) -> Result<(ILoft, f64)> {
    let samples = target_samples(target);
    let start = default_iloft(c, &target.midpoint())?;
    let sign = start.w1.signum();
    let with = |x: &[f64]| ILoft {
        w1: sign * x[0].exp(),
        w2: sign * x[1].exp(),
        ..start.clone()
    };
    let objective = |x: &[f64]| {
        let l = with(x);
        samples.iter().map(|p| l.faithful(p).powi(2)).sum::<f64>()
    };
    let x0 = [start.w1.abs().ln(), start.w2.abs().ln()];
    let result = nelder_mead(objective, &x0, &NmOptions::default())
        .map_err(|_| Error::FitDiverged("I-loft objective is not finite".into()))?;
    let best = with(&result.x);
    let err = rms(samples.iter().map(|p| best.faithful(p)));
    if !err.is_finite() {
        return Err(Error::FitDiverged("I-loft error is not finite".into()));
    }
    Ok((best, err))
}

/// I-loft bounding for a curved open boundary: its tangent planes contain
/// the boundary tangent and the mesh normal at each corner, and its weights
/// are fitted to the boundary curve `rim`.
pub fn curved_bounding(p1: &Point, p2: &Point, m: &TriMesh, tangents: [Vector; 2], rim: &Polyline) -> Result<ILoft> {
    let mut normals = [Vector::zeros(); 2];
    for (k, p) in [p1, p2].into_iter().enumerate() {
        let n = m.normal_at(p);
        let t = normalize(&tangents[k], 1e-300).ok_or(Error::DegenerateTangent(k))?;
        let c = t.cross(&n);
        if c.norm() < 1e-9 {
            return Err(Error::DegenerateTangent(k));
        }
        normals[k] = c.normalize();
    }
    let c = Corners::new(*p1, normals[0], *p2, normals[1]);
    if c.coplanar() {
        // straight boundary: any weights reproduce the common plane
        return default_iloft(&c, &rim.midpoint());
    }
    fit_iloft(&c, rim).map(|(l, _)| l)
}

/// One-sided second-order tangents at both ends of a polyline, pointing
/// from its start toward its end.
pub fn end_tangents(line: &Polyline) -> [Vector; 2] {
    let pts = line.points();
    let n = pts.len();
    let diff = |a: &Point, b: &Point, c: &Point| {
        let h1 = (b - a).norm();
        let h2 = (c - a).norm();
        if n < 3 || h1 == 0.0 || (h2 - 2.0 * h1).abs() > 0.5 * h1 {
            return b - a;
        }
        // quadratic extrapolation with evenly spaced neighbors
        (b - a) * 4.0 - (c - a)
    };
    let t1 = if n >= 3 { diff(&pts[0], &pts[1], &pts[2]) } else { pts[n - 1] - pts[0] };
    let t2 = if n >= 3 {
        -diff(&pts[n - 1], &pts[n - 2], &pts[n - 3])
    } else {
        pts[n - 1] - pts[0]
    };
    [t1, t2]
}

/// Fits both ribbon families and keeps the better one (Liming on ties).
pub fn build_ribbon(
    c: &Corners,
    target: &Polyline,
    bounding: Arc<ImplicitSurface>,
    mode: RibbonMode,
) -> Result<Ribbon> {
    let make = |primary: ImplicitSurface, fit_error: f64, kind| Ribbon {
        primary: Arc::new(primary),
        bounding: bounding.clone(),
        corners: *c,
        target: target.clone(),
        fit_error,
        kind,
    };
    if c.coplanar() {
        let (plane, _) = c.tangent_planes()?;
        let err = rms(target_samples(target).iter().map(|p| plane.value(p)));
        return Ok(make(ImplicitSurface::Plane(plane), err, RibbonKind::Plane));
    }
    let iloft = fit_iloft(c, target);
    if mode == RibbonMode::Iloft {
        let (l, err) = iloft?;
        return Ok(make(ImplicitSurface::ILoft(l), err, RibbonKind::Iloft));
    }
    let liming = match &iloft {
        Ok((_, e)) => fit_liming_against(c, target, *e),
        Err(_) => best_liming(c, &target_samples(target)),
    };
    match (liming, iloft) {
        (Ok((l, le)), Ok((i, ie))) => {
            if le <= ie + 1e-12 * c.chord() {
                Ok(make(ImplicitSurface::Liming(l), le, RibbonKind::Liming))
            } else {
                Ok(make(ImplicitSurface::ILoft(i), ie, RibbonKind::Iloft))
            }
        }
        (Ok((l, le)), Err(_)) => Ok(make(ImplicitSurface::Liming(l), le, RibbonKind::Liming)),
        (Err(_), Ok((i, ie))) => Ok(make(ImplicitSurface::ILoft(i), ie, RibbonKind::Iloft)),
        (Err(e), Err(_)) => Err(match e {
            e @ Error::FitDiverged(_) => e,
            other => Error::FitDiverged(other.to_string()),
        }),
    }
}

/// Corner data of an edge in its own direction.
pub fn edge_corners(net: &CurveNetwork, e: EdgeId) -> Corners {
    let [a, b] = net.edge(e).v;
    let (va, vb) = (net.vertex(a), net.vertex(b));
    Corners::new(va.position, va.normal, vb.position, vb.normal)
}

/// Fills in the polyline and bounding surface of an edge if missing.
pub fn prepare_edge(net: &mut CurveNetwork, e: EdgeId, m: &TriMesh, opts: &RibbonOptions) -> Result<()> {
    let c = edge_corners(net, e);
    let edge = net.edge(e);
    if edge.polyline.is_some() && edge.bounding.is_some() {
        return Ok(());
    }
    let kind = edge.kind;
    let mut polyline = edge.polyline.clone();
    let boundary = kind == EdgeKind::Boundary;
    if boundary && polyline.is_none() {
        polyline = Some(boundary_polyline(m, &c.p1, &c.p2)?);
    }
    let bounding = if boundary && opts.bounding == BoundingMode::Curved {
        let rim = polyline.as_ref().expect("boundary polyline");
        let l = curved_bounding(&c.p1, &c.p2, m, end_tangents(rim), rim)?;
        ImplicitSurface::ILoft(l)
    } else {
        let through = match opts.bounding {
            BoundingMode::Midpoint => Some(m.closest_point(&nalgebra::center(&c.p1, &c.p2)).point),
            _ => None,
        };
        let plane = match bounding_plane(&c.p1, &c.n1, &c.p2, &c.n2, through.as_ref()) {
            Err(Error::CollinearThrough) => bounding_plane(&c.p1, &c.n1, &c.p2, &c.n2, None)?,
            other => other?,
        };
        ImplicitSurface::Plane(plane)
    };
    let bounding = Arc::new(bounding);
    if polyline.is_none() {
        polyline = Some(trace_intersection(m, &bounding, &c.p1, &c.p2)?);
    }
    let edge = net.edge_mut(e);
    edge.polyline = polyline;
    edge.bounding = Some(bounding);
    edge.revision += 1;
    Ok(())
}

/// Prepares every active edge and fits ribbons where missing. Ribbon fits
/// run in parallel; results are deterministic.
pub fn build_ribbons(net: &mut CurveNetwork, m: &TriMesh, opts: &RibbonOptions) -> Result<()> {
    let edges = net.active_edges();
    for &e in &edges {
        prepare_edge(net, e, m, opts)?;
    }
    let todo: Vec<EdgeId> = edges.into_iter().filter(|&e| net.edge(e).ribbon.is_none()).collect();
    let shared: &CurveNetwork = net;
    let built: Vec<Result<Ribbon>> = todo
        .par_iter()
        .map(|&e| {
            let edge = shared.edge(e);
            build_ribbon(
                &edge_corners(shared, e),
                edge.polyline.as_ref().expect("prepared"),
                edge.bounding.clone().expect("prepared"),
                opts.mode,
            )
        })
        .collect();
    for (e, r) in todo.into_iter().zip(built) {
        let edge = net.edge_mut(e);
        edge.ribbon = Some(Arc::new(r?));
        edge.revision += 1;
    }
    Ok(())
}
