//! Adaptive refinement: measure every patch, split out-of-tolerance
//! boundaries halfway (X-nodes) and out-of-tolerance faces centrally
//! (T-nodes where a within-tolerance side keeps its ribbon), refit, repeat.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitter::{face_polylines, fit_face, FitConfig, FittedPatch};
use crate::geom::Point;
use crate::implicit::Faithful;
use crate::mesh::{Polyline, TriMesh};
use crate::network::{CurveNetwork, EdgeId, FaceId};
use crate::ribbon::{build_ribbons, RibbonOptions};
use crate::tessellate::{deviation_map, polish_point, tessellate_patch, DeviationStats};

/// Deviation of one fitted patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchMeasure {
    /// Tessellation-to-mesh distances.
    pub stats: DeviationStats,
    /// Per side: RMS distance from the boundary polyline to the patch.
    pub boundary_rms: Vec<f64>,
}

/// Distance from `p` to the patch zero set, found by Newton steps along the
/// faithful gradient. `None` where the field is undefined or the search
/// does not converge.
fn distance_to_patch(fp: &FittedPatch, p: &Point) -> Option<f64> {
    let f = Faithful(&fp.def);
    let (q, ok) = polish_point(&f, p, 1e-10 * fp.def.scale());
    ok.then(|| (q - p).norm())
}

/// RMS over the interior points of `line`; corners are excluded because
/// two boundings vanish there.
fn boundary_rms(fp: &FittedPatch, line: &Polyline) -> f64 {
    let pts = line.points();
    let samples: Vec<Point> = if pts.len() >= 3 {
        pts[1..pts.len() - 1].to_vec()
    } else {
        let mut s = line.resample(9);
        s.pop();
        s.remove(0);
        s
    };
    let d: Vec<f64> = samples.iter().filter_map(|p| distance_to_patch(fp, p)).collect();
    if d.is_empty() {
        return 0.0;
    }
    (d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64).sqrt()
}

/// Tessellates the patch and measures it against the mesh and its own
/// boundary polylines (given in side order).
pub fn measure_patch(fp: &FittedPatch, lines: &[&Polyline], m: &TriMesh, resolution: usize) -> Result<PatchMeasure> {
    let tess = tessellate_patch(fp, resolution, true)?;
    let (_, stats) = deviation_map(&tess.mesh, m);
    let boundary_rms = lines.iter().map(|l| boundary_rms(fp, l)).collect();
    Ok(PatchMeasure { stats, boundary_rms })
}

/// Splits chosen for one iteration. Face centers are the fitted centers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefinePlan {
    pub edges_to_split: BTreeSet<EdgeId>,
    pub faces_to_split: BTreeMap<FaceId, Point>,
}

impl RefinePlan {
    pub fn is_empty(&self) -> bool {
        self.edges_to_split.is_empty() && self.faces_to_split.is_empty()
    }
}

/// Boundaries with RMS above the tolerance are split; faces whose maximum
/// deviation is above it are split centrally. `tol_pct` is relative to the
/// mesh diagonal `diagonal`. `fits` and `measures` are keyed by face.
pub fn plan_refinement(
    net: &CurveNetwork,
    fits: &BTreeMap<FaceId, FittedPatch>,
    measures: &BTreeMap<FaceId, PatchMeasure>,
    tol_pct: f64,
    diagonal: f64,
) -> RefinePlan {
    let tol = tol_pct / 100.0 * diagonal;
    let mut plan = RefinePlan::default();
    for (&f, measure) in measures {
        for (side, &rms) in net.face(f).sides.iter().zip(&measure.boundary_rms) {
            if rms > tol {
                plan.edges_to_split.insert(side.edge);
            }
        }
        if measure.stats.max > tol {
            plan.faces_to_split.insert(f, fits[&f].center);
        }
    }
    plan
}

/// Applies a plan: edge splits first, then central face splits, then
/// ribbons for the new edges. Inherited edges keep their ribbons.
pub fn execute_plan(net: &mut CurveNetwork, plan: &RefinePlan, m: &TriMesh, opts: &RibbonOptions) -> Result<()> {
    for &e in &plan.edges_to_split {
        if net.edge(e).children.is_none() {
            net.split_edge(e, m)?;
        }
    }
    for (&f, center) in &plan.faces_to_split {
        net.split_face(f, center, m)?;
    }
    net.validate()?;
    build_ribbons(net, m, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub fit: FitConfig,
    pub ribbons: RibbonOptions,
    /// Grid cells per longest axis of each patch box.
    pub resolution: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            fit: FitConfig::default(),
            ribbons: RibbonOptions::default(),
            resolution: 64,
        }
    }
}

/// One row of the refinement report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub iteration: usize,
    pub patches: usize,
    pub avg_pct: f64,
    pub max_pct: f64,
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub network: CurveNetwork,
    /// Final fits in active-face order.
    pub patches: Vec<FittedPatch>,
    pub measures: Vec<PatchMeasure>,
    pub stats: DeviationStats,
    pub report: Vec<ReportRow>,
    pub iterations: usize,
}

/// Cache key of a face fit: the face and the revisions of its edges.
type FitKey = (FaceId, Vec<(EdgeId, u64)>);

fn fit_key(net: &CurveNetwork, f: FaceId) -> FitKey {
    (
        f,
        net.face(f)
            .sides
            .iter()
            .map(|s| (s.edge, net.edge(s.edge).revision))
            .collect(),
    )
}

/// Builds ribbons, fits, measures and refines until every patch is within
/// `tol_pct` (percent of the mesh diagonal) or `max_iter` refinement steps
/// were made. Faces whose edges did not change keep their previous fit and
/// measurement.
pub fn refine_until(m: &TriMesh, mut net: CurveNetwork, tol_pct: f64, max_iter: usize, cfg: &RefineConfig) -> Result<RefineOutcome> {
    if !(tol_pct > 0.0) {
        return Err(Error::RefinementStalled(format!("tolerance {tol_pct}% must be positive")));
    }
    let diagonal = m.scale();
    build_ribbons(&mut net, m, &cfg.ribbons)?;
    let mut cache: HashMap<FitKey, (FittedPatch, PatchMeasure)> = HashMap::new();
    let mut report = Vec::new();
    let mut iteration = 0;
    loop {
        let faces: Vec<FaceId> = net.active_faces().collect();
        let results: Vec<(FitKey, FittedPatch, PatchMeasure)> = faces
            .par_iter()
            .map(|&f| {
                let key = fit_key(&net, f);
                if let Some((fp, me)) = cache.get(&key) {
                    return Ok((key, fp.clone(), me.clone()));
                }
                let fp = fit_face(&net, f, m, &cfg.fit)?;
                let lines = face_polylines(&net, f)?;
                let me = measure_patch(&fp, &lines, m, cfg.resolution)?;
                Ok((key, fp, me))
            })
            .collect::<Result<_>>()?;
        let mut fits = BTreeMap::new();
        let mut measures = BTreeMap::new();
        for (key, fp, me) in results {
            fits.insert(key.0, fp.clone());
            measures.insert(key.0, me.clone());
            cache.insert(key, (fp, me));
        }
        let parts: Vec<DeviationStats> = measures.values().map(|me| me.stats).collect();
        let stats = DeviationStats::combine(&parts, diagonal);
        report.push(ReportRow {
            iteration,
            patches: faces.len(),
            avg_pct: stats.avg_pct,
            max_pct: stats.max_pct,
        });
        let plan = plan_refinement(&net, &fits, &measures, tol_pct, diagonal);
        if plan.is_empty() || iteration == max_iter {
            return Ok(RefineOutcome {
                network: net,
                patches: fits.into_values().collect(),
                measures: measures.into_values().collect(),
                stats,
                report,
                iterations: iteration,
            });
        }
        execute_plan(&mut net, &plan, m, &cfg.ribbons)?;
        iteration += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitter::fit_network;
    use crate::fixtures;
    use crate::network::EdgeKind;

    #[test]
    fn plane_patch_on_plane_has_no_deviation() {
        let m = fixtures::grid(8, 8, 2.0);
        let mut net = CurveNetwork::from_file(&fixtures::grid_network(1, 2.0), &m).unwrap();
        build_ribbons(&mut net, &m, &RibbonOptions::default()).unwrap();
        let fp = fit_face(&net, 0, &m, &FitConfig::default()).unwrap();
        let lines = face_polylines(&net, 0).unwrap();
        let me = measure_patch(&fp, &lines, &m, 16).unwrap();
        assert!(me.stats.avg <= 1e-9 * m.scale(), "{:?}", me.stats);
        assert!(me.boundary_rms.iter().all(|&r| r <= 1e-9));
    }

    fn measured(net: &CurveNetwork, m: &TriMesh) -> (BTreeMap<FaceId, FittedPatch>, BTreeMap<FaceId, PatchMeasure>) {
        let fits: BTreeMap<_, _> = net
            .active_faces()
            .zip(fit_network(net, m, &FitConfig::default()).unwrap())
            .collect();
        let measures = fits
            .iter()
            .map(|(&f, fp)| {
                let lines = face_polylines(net, f).unwrap();
                (f, measure_patch(fp, &lines, m, 24).unwrap())
            })
            .collect();
        (fits, measures)
    }

    fn sphere_net() -> (TriMesh, CurveNetwork) {
        let m = fixtures::icosphere(3, 1.0);
        let mut net = CurveNetwork::from_file(&fixtures::cube_network(0.0), &m).unwrap();
        build_ribbons(&mut net, &m, &RibbonOptions::default()).unwrap();
        (m, net)
    }

    #[test]
    fn plan_examples() {
        let (m, net) = sphere_net();
        let (fits, mut measures) = measured(&net, &m);
        let d = m.scale();
        assert!(plan_refinement(&net, &fits, &measures, 100.0, d).is_empty());

        // one face out, its boundaries in: pure central split
        let f0 = *measures.keys().next().unwrap();
        let tol_pct = 0.01;
        let tol = tol_pct / 100.0 * d;
        for me in measures.values_mut() {
            me.stats.max = 0.5 * tol;
            me.boundary_rms.iter_mut().for_each(|r| *r = 0.5 * tol);
        }
        measures.get_mut(&f0).unwrap().stats.max = 2.0 * tol;
        let plan = plan_refinement(&net, &fits, &measures, tol_pct, d);
        assert!(plan.edges_to_split.is_empty());
        assert_eq!(plan.faces_to_split.keys().copied().collect::<Vec<_>>(), vec![f0]);

        // two neighbors out with their shared boundary out: the edge once
        let shared = net.face(f0).sides[0].edge;
        let (other, _) = net.edge_faces(shared).into_iter().find(|(g, _)| *g != f0).unwrap();
        measures.get_mut(&other).unwrap().stats.max = 2.0 * tol;
        for f in [f0, other] {
            let k = net.face(f).sides.iter().position(|s| s.edge == shared).unwrap();
            measures.get_mut(&f).unwrap().boundary_rms[k] = 2.0 * tol;
        }
        let plan = plan_refinement(&net, &fits, &measures, tol_pct, d);
        assert_eq!(plan.edges_to_split.iter().copied().collect::<Vec<_>>(), vec![shared]);
        assert_eq!(plan.faces_to_split.len(), 2);
    }

    #[test]
    fn empty_plan_is_identity() {
        let (m, mut net) = sphere_net();
        let before = net.to_file();
        execute_plan(&mut net, &RefinePlan::default(), &m, &RibbonOptions::default()).unwrap();
        assert_eq!(net.to_file(), before);
    }

    #[test]
    fn pure_tnode_split_inherits_ribbons() {
        let (m, mut net) = sphere_net();
        let (fits, _) = measured(&net, &m);
        let f = net.active_faces().next().unwrap();
        let parents: Vec<EdgeId> = net.face(f).sides.iter().map(|s| s.edge).collect();
        let ribbons: Vec<_> = parents.iter().map(|&e| net.edge(e).ribbon.clone().unwrap()).collect();
        let mut plan = RefinePlan::default();
        plan.faces_to_split.insert(f, fits[&f].center);
        execute_plan(&mut net, &plan, &m, &RibbonOptions::default()).unwrap();
        let subs = net.face(f).children.clone();
        assert_eq!(subs.len(), 4);
        for (e, r) in parents.iter().zip(&ribbons) {
            let t = net.edge(*e).tnode.unwrap();
            for h in t.halves {
                assert!(std::sync::Arc::ptr_eq(net.edge(h).ribbon.as_ref().unwrap(), r));
            }
            // the neighbor still uses the parent with the same surface
            assert!(std::sync::Arc::ptr_eq(net.edge(*e).ribbon.as_ref().unwrap(), r));
        }
        // each sub-face has two inherited halves and two spokes
        for &s in &subs {
            let sides = &net.face(s).sides;
            let inherited = sides
                .iter()
                .filter(|x| ribbons.iter().any(|r| std::sync::Arc::ptr_eq(net.edge(x.edge).ribbon.as_ref().unwrap(), r)))
                .count();
            assert_eq!(inherited, 2);
            assert_eq!(sides.iter().filter(|x| net.edge(x.edge).kind == EdgeKind::Spoke).count(), 2);
        }
        // the sub-faces can be fitted
        for &s in &subs {
            let fp = fit_face(&net, s, &m, &FitConfig::default()).unwrap();
            assert!(fp.rms.is_finite());
        }
    }

    #[test]
    fn xnode_split_creates_four_boundaries() {
        let (m, mut net) = sphere_net();
        let (fits, _) = measured(&net, &m);
        let f0 = net.active_faces().next().unwrap();
        let shared = net.face(f0).sides[0].edge;
        let (f1, _) = net.edge_faces(shared).into_iter().find(|(g, _)| *g != f0).unwrap();
        let mut plan = RefinePlan::default();
        plan.edges_to_split.insert(shared);
        plan.faces_to_split.insert(f0, fits[&f0].center);
        plan.faces_to_split.insert(f1, fits[&f1].center);
        let vertices_before = net.vertices().len();
        execute_plan(&mut net, &plan, &m, &RibbonOptions::default()).unwrap();
        let mid = net.edge(net.edge(shared).children.unwrap()[0]).v[1];
        assert!(mid >= vertices_before);
        let incident = net
            .active_edges()
            .into_iter()
            .filter(|&e| net.edge(e).v.contains(&mid))
            .count();
        assert_eq!(incident, 4);
        // the split vertex sits at half arc length of the parent
        let parent = net.edge(shared).polyline.as_ref().unwrap();
        let (_, s) = parent.project(&net.vertex(mid).position);
        assert!((s - 0.5 * parent.length()).abs() <= 1e-9 * parent.length());
    }

    #[test]
    fn loose_tolerance_needs_no_iteration() {
        let (m, net) = sphere_net();
        let cfg = RefineConfig {
            resolution: 24,
            ..RefineConfig::default()
        };
        let out = refine_until(&m, net.clone(), 100.0, 5, &cfg).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.report.len(), 1);
        let direct = fit_network(&net, &m, &cfg.fit).unwrap();
        let zero = refine_until(&m, net, 1e-6, 0, &cfg).unwrap();
        assert_eq!(zero.iterations, 0);
        for (a, b) in zero.patches.iter().zip(&direct) {
            assert_eq!(a.def.weights(), b.def.weights());
        }
    }
}
